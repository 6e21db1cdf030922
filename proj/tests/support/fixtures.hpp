#pragma once

#include <string>

#include "ckge/kg_data.hpp"
#include "ckge/rng.hpp"
#include "ckge/sampler.hpp"

namespace testing {

// Uniformly random graph with disjoint, duplicate-free splits.
inline ckge::GraphSplits random_graph(std::uint64_t seed, std::size_t entities, std::size_t relations,
                                      std::size_t train, std::size_t held_out) {
  ckge::Rng rng(seed);
  ckge::GraphSplits g;
  for (std::size_t i = 0; i < entities; ++i) g.vocab.add_entity("e" + std::to_string(i));
  for (std::size_t r = 0; r < relations; ++r) g.vocab.add_relation("r" + std::to_string(r));
  ckge::TripleSet seen;
  auto draw = [&](ckge::TripleList& into, std::size_t count) {
    while (into.size() < count) {
      ckge::Triple t{static_cast<ckge::EntityId>(rng.below(entities)),
                     static_cast<ckge::RelationId>(rng.below(relations)),
                     static_cast<ckge::EntityId>(rng.below(entities))};
      if (seen.insert(t).second) into.push_back(t);
    }
  };
  draw(g.train, train);
  draw(g.valid, held_out);
  draw(g.test, held_out);
  return g;
}

// Small graph sampled into sessions and relabeled in arrival order.
inline ckge::SessionCorpus small_corpus(std::uint64_t seed = 1, std::size_t sessions = 3) {
  const auto g = random_graph(seed, 30, 3, 120, 40);
  return ckge::relabel_by_arrival(g, ckge::sample_sessions(g, sessions, seed));
}

}  // namespace testing
