#include "doctest.h"

#include <cmath>
#include <numeric>

#include "ckge/evaluation.hpp"
#include "ckge/sampler.hpp"
#include "support/oracles.hpp"

using namespace ckge;

namespace {

// Analogy model with dim 2 and identity relation: goodness(h, 0, t) is
// the dot product of the two entity rows.
ModelState dot_model(const std::vector<std::pair<double, double>>& rows) {
  ModelState m;
  m.kind = ModelKind::Analogy;
  m.dim = 2;
  m.entity_emb.resize(static_cast<Eigen::Index>(rows.size()), 2);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.entity_emb(static_cast<Eigen::Index>(i), 0) = rows[i].first;
    m.entity_emb(static_cast<Eigen::Index>(i), 1) = rows[i].second;
  }
  m.relation_emb.resize(1, 2);
  m.relation_emb << 1.0, 0.0;
  return m;
}

std::vector<std::vector<double>> random_square(std::size_t n, Rng& rng) {
  std::vector<std::vector<double>> m(n, std::vector<double>(n));
  for (auto& row : m)
    for (auto& v : row) v = rng.uniform();
  return m;
}

}  // namespace

TEST_CASE("filtered rank on hand-set scores") {
  // Head 0 is [1, 0]; tail goodness is the first coordinate of the tail row.
  const auto m = dot_model({{1.0, 0.0}, {0.9, 0.0}, {0.5, 0.0}, {0.95, 0.0}});
  const std::vector<EntityId> candidates{1, 2, 3};
  const Triple truth{0, 0, 1};

  SUBCASE("the better corruption is filtered") {
    const TripleSet filter{{0, 0, 3}};
    CHECK(filtered_rank(m, truth, candidates, filter).tail == 1.0);
  }
  SUBCASE("the better corruption competes") {
    CHECK(filtered_rank(m, truth, candidates, {}).tail == 2.0);
  }
  SUBCASE("every corruption filtered") {
    const TripleSet filter{{0, 0, 2}, {0, 0, 3}};
    CHECK(filtered_rank(m, truth, candidates, filter).tail == 1.0);
  }
  SUBCASE("truth scores best") {
    const Triple best{0, 0, 3};
    CHECK(filtered_rank(m, best, candidates, {}).tail == 1.0);
  }
  SUBCASE("too few candidates") {
    const std::vector<EntityId> one{1};
    CHECK_THROWS(filtered_rank(m, truth, one, {}));
  }
}

TEST_CASE("tie policies") {
  const auto m = dot_model({{1.0, 0.0}, {0.5, 0.0}, {0.5, 0.0}, {0.5, 0.0}, {0.9, 0.0}});
  const std::vector<EntityId> candidates{1, 2, 3, 4};
  const Triple truth{0, 0, 1};
  CHECK(filtered_rank(m, truth, candidates, {}, TiePolicy::Optimistic).tail == 2.0);
  CHECK(filtered_rank(m, truth, candidates, {}, TiePolicy::Pessimistic).tail == 4.0);
  CHECK(filtered_rank(m, truth, candidates, {}, TiePolicy::Mean).tail == 3.0);
}

TEST_CASE("filtered rank equals the brute-force oracle") {
  for (auto kind : {ModelKind::TransE, ModelKind::Analogy}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      CAPTURE(seed);
      Rng rng(seed);
      const std::size_t ne = 30 + rng.below(21), nr = 4;
      auto m = init_model(kind, ne, nr, 4, rng);
      // Coarse values force plenty of exact ties.
      if (seed % 2) {
        m.entity_emb = (m.entity_emb * 2.0).array().round() / 2.0;
        m.relation_emb = (m.relation_emb * 2.0).array().round() / 2.0;
      }
      std::vector<EntityId> candidates;
      for (EntityId e = 0; e < ne; ++e)
        if (rng.below(5) != 0) candidates.push_back(e);
      TripleSet filter;
      for (int i = 0; i < 200; ++i)
        filter.insert({candidates[rng.below(candidates.size())], static_cast<RelationId>(rng.below(nr)),
                       candidates[rng.below(candidates.size())]});
      for (int i = 0; i < 25; ++i) {
        const Triple t{candidates[rng.below(candidates.size())], static_cast<RelationId>(rng.below(nr)),
                       candidates[rng.below(candidates.size())]};
        for (auto ties : {TiePolicy::Optimistic, TiePolicy::Pessimistic, TiePolicy::Mean}) {
          const auto r = filtered_rank(m, t, candidates, filter, ties);
          CHECK(r.head == oracle::brute_rank_side(m, t, true, candidates, filter, ties));
          CHECK(r.tail == oracle::brute_rank_side(m, t, false, candidates, filter, ties));
        }
      }
    }
  }
}

TEST_CASE("MRR and Hits@10 from ranks") {
  const double a[] = {1, 2, 4};
  CHECK(metrics_from_ranks(a).mrr == doctest::Approx(0.5833333333));
  const double b[] = {1, 11, 5};
  CHECK(metrics_from_ranks(b).hits10 == doctest::Approx(2.0 / 3.0));
  const double c[] = {10, 10.5};
  CHECK(metrics_from_ranks(c).hits10 == 0.5);

  const auto m = dot_model({{1.0, 0.0}, {0.9, 0.0}, {0.5, 0.0}});
  const Triple t{0, 0, 1};
  const std::vector<EntityId> candidates{0, 1, 2};
  const auto perfect = eval_split(m, std::span<const Triple>(&t, 1), candidates, {{0, 0, 0}, {1, 0, 1}});
  CHECK(perfect.mrr == 1.0);
  CHECK(perfect.hits10 == 1.0);
}

TEST_CASE("Hits@10 is one whenever at most ten candidates survive") {
  Rng rng(2);
  auto m = init_model(ModelKind::TransE, 10, 2, 4, rng);
  std::vector<EntityId> candidates(10);
  std::iota(candidates.begin(), candidates.end(), 0);
  TripleList test;
  for (int i = 0; i < 20; ++i)
    test.push_back({static_cast<EntityId>(rng.below(10)), static_cast<RelationId>(rng.below(2)),
                    static_cast<EntityId>(rng.below(10))});
  const auto r = eval_split(m, test, candidates, {}, TiePolicy::Pessimistic);
  CHECK(r.hits10 == 1.0);
  CHECK(r.mrr > 0.0);
  CHECK(r.mrr <= 1.0);
}

TEST_CASE("continual measures on the two-session example") {
  Matrix m(2, 2);
  m << 0.5, 0.3, 0.4, 0.6;
  CHECK(acc(m) == doctest::Approx(0.5));
  CHECK(*fwt(m) == doctest::Approx(0.3));
  CHECK(*bwt(m) == doctest::Approx(-0.1));
  CHECK(*plus_bwt(m) == 0.0);
  CHECK(*rem(m) == doctest::Approx(0.9));
}

TEST_CASE("constant matrices and the single-session case") {
  Matrix c = Matrix::Constant(4, 4, 0.37);
  CHECK(acc(c) == doctest::Approx(0.37));
  CHECK(*fwt(c) == doctest::Approx(0.37));
  CHECK(*bwt(c) == doctest::Approx(0.0));
  CHECK(*plus_bwt(c) == doctest::Approx(0.0));
  CHECK(*rem(c) == doctest::Approx(1.0));

  Matrix one(1, 1);
  one << 0.8;
  CHECK(acc(one) == 0.8);
  CHECK_FALSE(fwt(one).has_value());
  CHECK_FALSE(bwt(one).has_value());
  CHECK_FALSE(rem(one).has_value());

  CHECK_THROWS(acc(Matrix::Zero(2, 3)));
}

TEST_CASE("continual measures equal direct summation on random matrices") {
  Rng rng(13);
  for (std::size_t n : {2u, 3u, 5u, 7u}) {
    for (int trial = 0; trial < 10; ++trial) {
      const auto raw = random_square(n, rng);
      const Matrix m = oracle::to_matrix(raw);
      CHECK(std::abs(acc(m) - oracle::acc(raw)) < 1e-12);
      CHECK(std::abs(*fwt(m) - oracle::fwt(raw)) < 1e-12);
      CHECK(std::abs(*bwt(m) - oracle::bwt(raw)) < 1e-12);
      CHECK(std::abs(*plus_bwt(m) - oracle::plus_bwt(raw)) < 1e-12);
      CHECK(std::abs(*rem(m) - oracle::rem(raw)) < 1e-12);
      CHECK(*rem(m) == doctest::Approx(1.0 - std::max(0.0, -*bwt(m))));
      for (double v : {acc(m), *fwt(m), *plus_bwt(m), *rem(m)}) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
      }
    }
  }
}

TEST_CASE("model size score") {
  const double grow[] = {100, 200};
  CHECK(ms(grow) == doctest::Approx(0.75));
  const double flat[] = {50, 50, 50};
  CHECK(ms(flat) == 1.0);
  const double shrink[] = {100, 50, 25};
  CHECK(ms(shrink) == 1.0);
  const double zero[] = {100, 0};
  CHECK_THROWS(ms(zero));

  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> sizes(5);
    for (auto& s : sizes) s = rng.uniform(1.0, 100.0);
    auto bigger = sizes;
    for (std::size_t i = 1; i < bigger.size(); ++i) bigger[i] += rng.uniform(0.0, 50.0);
    CHECK(ms(bigger) <= ms(sizes) + 1e-15);
    CHECK(ms(sizes) == doctest::Approx(oracle::ms(sizes)));
  }
}

TEST_CASE("samples storage score") {
  const double none[] = {0, 0, 0};
  CHECK(sss(none, 100.0) == 1.0);
  const double batch[] = {0, 20, 40, 60, 80};
  CHECK(sss(batch, 100.0) == doctest::Approx(0.6));
  const double all[] = {100, 100};
  CHECK(sss(all, 100.0) == 0.0);
  const double over[] = {300, 300};
  CHECK(sss(over, 100.0) == 0.0);

  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> stored(4);
    for (auto& s : stored) s = rng.uniform(0.0, 40.0);
    auto more = stored;
    for (auto& s : more) s += rng.uniform(0.0, 20.0);
    CHECK(sss(more, 100.0) <= sss(stored, 100.0) + 1e-15);
    CHECK(sss(stored, 100.0) == doctest::Approx(oracle::sss(stored, 100.0)));
  }
}

TEST_CASE("learning-curve area") {
  const double flat[] = {0.4, 0.4, 0.4};
  CHECK(lca(std::span<const double>(flat)) == doctest::Approx(1.0));
  const double zero[] = {0.0, 0.0};
  CHECK(lca(std::span<const double>(zero)) == 0.0);

  // Ramp m(k) = k / t for k = 1..t: area over m* t is (t + 1) / (2 t).
  for (std::size_t t : {4u, 10u, 100u, 1000u}) {
    std::vector<double> ramp(t);
    for (std::size_t k = 0; k < t; ++k) ramp[k] = static_cast<double>(k + 1) / static_cast<double>(t);
    CHECK(lca(std::span<const double>(ramp)) ==
          doctest::Approx((static_cast<double>(t) + 1.0) / (2.0 * static_cast<double>(t))));
  }
  CHECK(lca(std::span<const double>(std::vector<double>(1000, 0.0))) == 0.0);

  // Only the prefix up to the first maximum counts.
  const double peak[] = {0.2, 0.8, 0.1, 0.8};
  CHECK(lca(std::span<const double>(peak)) == doctest::Approx(0.625));

  Rng rng(6);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> curve(1 + rng.below(30));
    for (auto& v : curve) v = rng.uniform();
    const double got = lca(std::span<const double>(curve));
    CHECK(got == doctest::Approx(oracle::lca(curve)));
    CHECK(got > 0.0);
    CHECK(got <= 1.0);
  }
}

TEST_CASE("generator epochs can be left out of the learning-curve area") {
  TrainTrace solver;
  for (std::size_t e = 1; e <= 20; ++e) {
    TraceEntry t;
    t.epoch = e;
    t.hits10 = 0.5 * (1.0 - std::exp(-0.3 * static_cast<double>(e)));
    t.mrr = t.hits10 / 2.0;
    solver.push_back(t);
  }
  TrainTrace with_generator;
  for (std::size_t e = 1; e <= 500; ++e) {
    TraceEntry t;
    t.epoch = e;
    t.generator = true;
    t.hits10 = 0.05;
    t.mrr = 0.02;
    with_generator.push_back(t);
  }
  with_generator.insert(with_generator.end(), solver.begin(), solver.end());
  CHECK(lca(with_generator, false) == lca(solver, true));
  CHECK(lca(with_generator, false, TraceMeasure::Mrr) == lca(solver, true, TraceMeasure::Mrr));
  CHECK(lca(with_generator, true) < lca(solver, true));
}

TEST_CASE("session filters and performance matrices") {
  GraphSplits g;
  for (int i = 0; i < 24; ++i) g.vocab.add_entity("e" + std::to_string(i));
  for (int r = 0; r < 3; ++r) g.vocab.add_relation("r" + std::to_string(r));
  Rng rng(7);
  TripleSet seen;
  auto draw = [&](TripleList& into, std::size_t count) {
    while (into.size() < count) {
      Triple t{static_cast<EntityId>(rng.below(24)), static_cast<RelationId>(rng.below(3)),
               static_cast<EntityId>(rng.below(24))};
      if (seen.insert(t).second) into.push_back(t);
    }
  };
  draw(g.train, 90);
  draw(g.valid, 30);
  draw(g.test, 30);
  const auto corpus = relabel_by_arrival(g, sample_sessions(g, 3, 1));
  const auto& sessions = corpus.sessions;
  REQUIRE(!sessions[0].test.empty());

  const auto filters = session_filters(sessions);
  REQUIRE(filters.size() == 3);
  for (std::size_t n = 0; n < 3; ++n) {
    TripleSet expect;
    for (std::size_t i = 0; i <= n; ++i) expect.insert(sessions[i].train.begin(), sessions[i].train.end());
    expect.insert(sessions[n].valid.begin(), sessions[n].valid.end());
    expect.insert(sessions[n].test.begin(), sessions[n].test.end());
    CHECK(filters[n] == expect);
  }

  std::vector<ModelState> models;
  for (std::size_t n = 0; n < 3; ++n) {
    Rng init(100 + n);
    models.push_back(init_model(ModelKind::TransE, sessions[n].observed_entities.size(),
                                sessions[n].observed_relations.size(), 6, init));
  }
  const auto a = build_matrices(models, sessions, filters, 5);
  const auto b = build_matrices(models, sessions, filters, 5);
  CHECK(a.mrr == b.mrr);
  CHECK(a.hits10 == b.hits10);
  CHECK(a.hits10.minCoeff() >= 0.0);
  CHECK(a.hits10.maxCoeff() <= 1.0);
  CHECK(a.mrr.minCoeff() > 0.0);

  // Cells on and below the diagonal against the brute-force oracle.
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      std::vector<double> ranks;
      for (const auto& t : sessions[j].test) {
        ranks.push_back(oracle::brute_rank_side(models[i], t, true, sessions[i].observed_entities, filters[i],
                                                TiePolicy::Optimistic));
        ranks.push_back(oracle::brute_rank_side(models[i], t, false, sessions[i].observed_entities, filters[i],
                                                TiePolicy::Optimistic));
      }
      double rr = 0.0, hits = 0.0;
      for (double r : ranks) {
        rr += 1.0 / r;
        hits += r <= 10.0 ? 1.0 : 0.0;
      }
      const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
      CHECK(a.mrr(ii, jj) == doctest::Approx(rr / static_cast<double>(ranks.size())));
      CHECK(a.hits10(ii, jj) == doctest::Approx(hits / static_cast<double>(ranks.size())));
    }

  const std::vector<ModelState> one_model{models[0]};
  const std::vector<SessionDataset> one_session{sessions[0]};
  const auto single = build_matrices(one_model, one_session, {filters[0]}, 5);
  CHECK(single.mrr.rows() == 1);
  CHECK(single.mrr(0, 0) == a.mrr(0, 0));
}
