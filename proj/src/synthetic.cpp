#include "ckge/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <string>

#include "ckge/errors.hpp"
#include "ckge/rng.hpp"

namespace ckge {

namespace {

std::string padded(char prefix, std::size_t id, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, id);
  return buf;
}

int width_for(std::size_t n) { return static_cast<int>(std::to_string(n == 0 ? 0 : n - 1).size()); }

Vocab numbered_vocab(std::size_t entities, std::size_t relations) {
  Vocab v;
  const int we = width_for(entities), wr = width_for(relations);
  for (std::size_t i = 0; i < entities; ++i) v.add_entity(padded('e', i, we));
  for (std::size_t i = 0; i < relations; ++i) v.add_relation(padded('r', i, wr));
  return v;
}

// Inverse-CDF draw of a degree in [1, cdf.size()].
std::size_t power_law_degree(Rng& rng, const std::vector<double>& cdf) {
  const double u = rng.uniform() * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()) + 1, cdf.size());
}

}  // namespace

GraphSplits make_sparse_graph(const SparseGraphSpec& spec, std::uint64_t seed) {
  if (spec.entities < 2 || spec.relations < 1 || spec.train < 1) {
    throw ConfigError("sparse graph needs at least two entities, one relation and one triple");
  }
  Rng rng = Rng::derive(seed, "sparse-graph");
  GraphSplits g;
  g.vocab = numbered_vocab(spec.entities, spec.relations);

  const auto heldout = static_cast<std::size_t>(std::floor(spec.heldout_entity_share * static_cast<double>(spec.entities)));
  const std::size_t in_train = spec.entities - heldout;
  const std::size_t max_degree = std::max<std::size_t>(2, in_train / 4);
  std::vector<double> cdf(max_degree);
  double acc = 0.0;
  for (std::size_t d = 1; d <= max_degree; ++d) {
    acc += std::pow(static_cast<double>(d), -spec.degree_exponent);
    cdf[d - 1] = acc;
  }

  // Entity ids are shuffled so degree does not correlate with id.
  std::vector<EntityId> ids(spec.entities);
  std::iota(ids.begin(), ids.end(), EntityId{0});
  rng.shuffle(std::span<EntityId>(ids));

  const std::size_t slots = 2 * spec.train;
  std::vector<double> degree(in_train);
  double total = 0.0;
  for (auto& d : degree) total += (d = static_cast<double>(power_law_degree(rng, cdf)));
  // Rescale so that the stubs add up to two endpoints per triple, keeping
  // every entity at degree >= 1.
  std::vector<EntityId> stubs;
  stubs.reserve(slots + in_train);
  const double scale = static_cast<double>(slots - in_train) / std::max(1.0, total - static_cast<double>(in_train));
  for (std::size_t i = 0; i < in_train; ++i) {
    const auto extra = static_cast<std::size_t>(std::llround((degree[i] - 1.0) * scale));
    for (std::size_t k = 0; k < 1 + extra; ++k) stubs.push_back(ids[i]);
  }
  while (stubs.size() < slots) stubs.push_back(ids[rng.below(in_train)]);
  rng.shuffle(std::span<EntityId>(stubs));

  // Relation frequencies are skewed as well.
  std::vector<double> rel_cdf(spec.relations);
  acc = 0.0;
  for (std::size_t r = 0; r < spec.relations; ++r) rel_cdf[r] = (acc += 1.0 / static_cast<double>(r + 1));
  auto draw_relation = [&] {
    const double u = rng.uniform() * rel_cdf.back();
    return static_cast<RelationId>(std::upper_bound(rel_cdf.begin(), rel_cdf.end(), u) - rel_cdf.begin());
  };

  TripleSet seen;
  std::vector<EntityId> leftover;
  for (std::size_t i = 0; i + 1 < stubs.size(); i += 2) {
    Triple t{stubs[i], draw_relation(), stubs[i + 1]};
    if (t.head == t.tail || seen.contains(t)) {
      leftover.push_back(stubs[i]);
      leftover.push_back(stubs[i + 1]);
      continue;
    }
    seen.insert(t);
    g.train.push_back(t);
  }
  // Re-wire clashing stubs against random partners until the count is met.
  std::size_t k = 0;
  while (g.train.size() < spec.train) {
    const EntityId a = k < leftover.size() ? leftover[k++] : ids[rng.below(in_train)];
    const EntityId b = ids[rng.below(in_train)];
    Triple t = rng.coin() ? Triple{a, draw_relation(), b} : Triple{b, draw_relation(), a};
    if (t.head == t.tail || seen.contains(t)) continue;
    seen.insert(t);
    g.train.push_back(t);
  }

  // Valid/test: endpoints drawn in proportion to training degree, plus one
  // triple for every held-out entity.
  auto draw_endpoint = [&] { return stubs[rng.below(stubs.size())]; };
  TripleList extra;
  for (std::size_t i = in_train; i < spec.entities; ++i) {
    for (;;) {
      const EntityId other = draw_endpoint();
      Triple t = rng.coin() ? Triple{ids[i], draw_relation(), other} : Triple{other, draw_relation(), ids[i]};
      if (seen.insert(t).second) {
        extra.push_back(t);
        break;
      }
    }
  }
  const std::size_t eval_total = spec.valid + spec.test;
  while (extra.size() < eval_total) {
    Triple t{draw_endpoint(), draw_relation(), draw_endpoint()};
    if (t.head == t.tail || !seen.insert(t).second) continue;
    extra.push_back(t);
  }
  rng.shuffle(std::span<Triple>(extra));
  g.valid.assign(extra.begin(), extra.begin() + static_cast<std::ptrdiff_t>(spec.valid));
  g.test.assign(extra.begin() + static_cast<std::ptrdiff_t>(spec.valid),
                extra.begin() + static_cast<std::ptrdiff_t>(std::min(extra.size(), eval_total)));
  return g;
}

GraphSplits make_latent_graph(const LatentGraphSpec& spec, std::uint64_t seed) {
  if (spec.entities < 3 || spec.relations < 1 || spec.latent_dim < 1) {
    throw ConfigError("latent graph needs at least three entities and one relation");
  }
  if (spec.valid_share < 0.0 || spec.test_share < 0.0 || spec.valid_share + spec.test_share >= 1.0) {
    throw ConfigError("valid and test shares must leave room for training triples");
  }
  Rng rng = Rng::derive(seed, "latent-graph");
  GraphSplits g;
  g.vocab = numbered_vocab(spec.entities, spec.relations);

  std::vector<std::vector<double>> x(spec.entities, std::vector<double>(spec.latent_dim));
  std::vector<std::vector<double>> w(spec.relations, std::vector<double>(spec.latent_dim));
  for (auto& row : x)
    for (auto& v : row) v = rng.normal();
  for (auto& row : w)
    for (auto& v : row) v = spec.relation_scale * rng.normal();

  TripleList all;
  std::vector<std::pair<double, EntityId>> dist(spec.entities);
  for (std::size_t r = 0; r < spec.relations; ++r) {
    for (std::size_t h = 0; h < spec.entities; ++h) {
      for (std::size_t t = 0; t < spec.entities; ++t) {
        double d2 = 0.0;
        for (std::size_t k = 0; k < spec.latent_dim; ++k) {
          const double diff = x[h][k] + w[r][k] - x[t][k];
          d2 += diff * diff;
        }
        dist[t] = {t == h ? std::numeric_limits<double>::infinity() : d2, static_cast<EntityId>(t)};
      }
      std::partial_sort(dist.begin(), dist.begin() + 2, dist.end());
      all.push_back({static_cast<EntityId>(h), static_cast<RelationId>(r), dist[0].second});
      if (rng.uniform() < spec.second_tail_probability) {
        all.push_back({static_cast<EntityId>(h), static_cast<RelationId>(r), dist[1].second});
      }
    }
  }
  rng.shuffle(std::span<Triple>(all));
  const auto nv = static_cast<std::size_t>(std::floor(spec.valid_share * static_cast<double>(all.size())));
  const auto nt = static_cast<std::size_t>(std::floor(spec.test_share * static_cast<double>(all.size())));
  g.valid.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(nv));
  g.test.assign(all.begin() + static_cast<std::ptrdiff_t>(nv), all.begin() + static_cast<std::ptrdiff_t>(nv + nt));
  g.train.assign(all.begin() + static_cast<std::ptrdiff_t>(nv + nt), all.end());
  return g;
}

}  // namespace ckge
