#pragma once

#include <cstdint>

#include "ckge/kg_data.hpp"

namespace ckge {

// Sparse graph with a heavy-tailed degree distribution, sized like the
// WN18RR benchmark by default. Degrees follow a discrete power law and are
// wired up by random stub matching; a small share of entities occurs only
// in the valid/test splits.
struct SparseGraphSpec {
  std::size_t entities = 40943;
  std::size_t relations = 11;
  std::size_t train = 86835;
  std::size_t valid = 3034;
  std::size_t test = 3134;
  double degree_exponent = 2.1;
  double heldout_entity_share = 0.009;
};

GraphSplits make_sparse_graph(const SparseGraphSpec& spec, std::uint64_t seed);

// Small dense graph drawn from a latent translation model: every entity and
// relation gets a vector in a low-dimensional space and (h, r) links to the
// entities nearest to x_h + w_r. Defaults give roughly 200 entities,
// 11 relations and 2,500 training triples.
struct LatentGraphSpec {
  std::size_t entities = 200;
  std::size_t relations = 11;
  std::size_t latent_dim = 8;
  double relation_scale = 0.8;
  double second_tail_probability = 0.45;
  double valid_share = 0.1;
  double test_share = 0.1;
};

GraphSplits make_latent_graph(const LatentGraphSpec& spec, std::uint64_t seed);

}  // namespace ckge
