#include "doctest.h"

#include <cmath>

#include "ckge/errors.hpp"
#include "ckge/methods.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"
#include "support/tempdir.hpp"

using namespace ckge;

namespace {

ModelState rows_model(const Matrix& entities, const Matrix& relations) {
  ModelState m;
  m.kind = ModelKind::TransE;
  m.dim = static_cast<std::size_t>(entities.cols());
  m.entity_emb = entities;
  m.relation_emb = relations;
  return m;
}

MethodConfig quick_config() {
  MethodConfig cfg;
  cfg.dim = 6;
  cfg.solver.max_epochs = 12;
  cfg.solver.batch_size = 16;
  cfg.solver.eval_every = 0;
  cfg.generator.token_dim = 8;
  cfg.generator.latent_dim = 4;
  cfg.generator.hidden_dim = 8;
  cfg.generator.epochs = 3;
  cfg.generator.batch_size = 16;
  return cfg;
}

struct Run {
  std::vector<ModelState> models;
  std::vector<SessionOutcome> outcomes;
};

Run run_sessions(Method method, const MethodConfig& cfg, const SessionCorpus& corpus, std::uint64_t seed,
                 std::size_t upto) {
  const auto filters = session_filters(corpus.sessions);
  auto strategy = make_strategy(method, cfg);
  Run run;
  ModelState model;
  for (std::size_t n = 0; n < upto; ++n) {
    SessionContext ctx{&corpus.sessions, &filters, n, seed};
    run.outcomes.push_back(strategy->train_session(model, ctx));
    run.models.push_back(model);
  }
  return run;
}

}  // namespace

TEST_CASE("L2R penalty") {
  Matrix prev_e(2, 2), prev_r(1, 2);
  prev_e << 0.1, 0.2, 0.3, 0.4;
  prev_r << 0.5, 0.6;
  const auto snapshot = rows_model(prev_e, prev_r);

  CHECK(l2r_penalty(snapshot, snapshot, 1.0).penalty == 0.0);

  auto moved = snapshot;
  moved.entity_emb(0, 0) += 1.0;
  const auto r = l2r_penalty(moved, snapshot, 1.0);
  CHECK(r.penalty == doctest::Approx(1.0));
  const auto g = r.grads.entity.find(0);
  REQUIRE(g.size() == 2);
  CHECK(g[0] == doctest::Approx(2.0));
  CHECK(g[1] == doctest::Approx(0.0));

  // A row added after the snapshot is free to move.
  Matrix grown_e(3, 2);
  grown_e << 0.1, 0.2, 0.3, 0.4, 9.0, -9.0;
  const auto grown = rows_model(grown_e, prev_r);
  CHECK(l2r_penalty(grown, snapshot, 1.0).penalty == 0.0);

  CHECK_THROWS_AS(l2r_penalty(moved, snapshot, -1.0), ConfigError);
}

TEST_CASE("penalty gradients match finite differences") {
  Rng rng(3);
  auto snapshot = rows_model(oracle::random_matrix(4, 3, rng), oracle::random_matrix(2, 3, rng));
  auto model = rows_model(oracle::random_matrix(5, 3, rng), oracle::random_matrix(3, 3, rng));
  const Matrix omega_e = oracle::random_matrix(4, 3, rng, 0.0, 3.0);
  const Matrix omega_r = oracle::random_matrix(2, 3, rng, 0.0, 3.0);

  for (int variant = 0; variant < 3; ++variant) {
    CAPTURE(variant);
    auto penalty = [&] {
      if (variant == 0) return l2r_penalty(model, snapshot, 0.7);
      return si_penalty(model, snapshot, omega_e, omega_r, 0.7, variant == 2);
    };
    const auto analytic = penalty();
    double worst = 0.0;
    auto check = [&](Matrix& table, const RowGradients& grads) {
      for (Eigen::Index i = 0; i < table.rows(); ++i)
        for (Eigen::Index k = 0; k < table.cols(); ++k) {
          const double numeric =
              oracle::central_difference([&] { return penalty().penalty; }, &table(i, k), 1e-5);
          const auto row = grads.find(static_cast<std::uint32_t>(i));
          const double a = row.empty() ? 0.0 : row[static_cast<std::size_t>(k)];
          if (std::abs(a - numeric) < 1e-9) continue;
          worst = std::max(worst, oracle::relative_error(a, numeric));
        }
    };
    check(model.entity_emb, analytic.grads.entity);
    check(model.relation_emb, analytic.grads.relation);
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("SI penalty") {
  Matrix prev(1, 1), cur(1, 1), none(0, 1);
  prev << 0.0;
  cur << 1.0;
  const auto snapshot = rows_model(prev, none);
  const auto model = rows_model(cur, none);
  Matrix omega(1, 1);
  omega << 2.0;
  const Matrix no_rel(0, 1);

  CHECK(si_penalty(snapshot, snapshot, omega, no_rel, 1.0).penalty == 0.0);
  CHECK(si_penalty(model, snapshot, omega, no_rel, 1.0).penalty == doctest::Approx(2.0));
  CHECK(si_penalty(model, snapshot, omega, no_rel, 1.0, true).penalty == doctest::Approx(4.0));
  CHECK(si_penalty(model, snapshot, Matrix::Zero(1, 1), no_rel, 1.0).penalty == 0.0);
}

TEST_CASE("SI with unit importance equals L2R") {
  Rng rng(4);
  const auto snapshot = rows_model(oracle::random_matrix(6, 4, rng), oracle::random_matrix(2, 4, rng));
  const auto model = rows_model(oracle::random_matrix(8, 4, rng), oracle::random_matrix(3, 4, rng));
  const Matrix ones_e = Matrix::Ones(6, 4), ones_r = Matrix::Ones(2, 4);
  for (double lambda : {0.0, 0.01, 1.0, 3.5}) {
    CHECK(si_penalty(model, snapshot, ones_e, ones_r, lambda).penalty ==
          doctest::Approx(l2r_penalty(model, snapshot, lambda).penalty));
    CHECK(si_penalty(model, snapshot, ones_e, ones_r, lambda, true).penalty ==
          doctest::Approx(l2r_penalty(model, snapshot, lambda).penalty));
  }
}

TEST_CASE("SI path accumulation and consolidation") {
  SiState si;
  Matrix one(1, 1), none(0, 1);
  one << 0.0;
  const auto start = rows_model(one, none);
  si_resize(si, start);
  CHECK(si.path_entity.rows() == 1);

  Gradients g(1), zero_step(1), step(1);
  g.entity.row(0)[0] = 1.0;
  zero_step.entity.row(0)[0] = 0.0;
  si_accumulate(si, g, zero_step);
  CHECK(si.path_entity(0, 0) == 0.0);

  step.entity.row(0)[0] = -0.1;
  si_accumulate(si, g, step);
  CHECK(si.path_entity(0, 0) == doctest::Approx(0.1));
  si_accumulate(si, g, step);
  CHECK(si.path_entity(0, 0) == doctest::Approx(0.2));

  // omega 0.1 over a total move of 0.1 with damping 0.01: 0.1 / 0.02 = 5
  si.path_entity(0, 0) = 0.1;
  Matrix moved(1, 1);
  moved << 0.1;
  const auto end = rows_model(moved, none);
  si_consolidate(si, start, end, 0.01);
  CHECK(si.omega_entity(0, 0) == doctest::Approx(5.0));
  CHECK(si.path_entity(0, 0) == 0.0);

  // Nothing accumulated: importance stays put.
  si_consolidate(si, start, end, 0.01);
  CHECK(si.omega_entity(0, 0) == doctest::Approx(5.0));

  // Harmful paths are clipped at zero.
  si.path_entity(0, 0) = -3.0;
  si_consolidate(si, start, end, 0.01);
  CHECK(si.omega_entity(0, 0) == doctest::Approx(5.0));

  CHECK_THROWS_AS(si_consolidate(si, start, end, 0.0), ConfigError);
}

TEST_CASE("SI importance stays non-negative through training") {
  const auto corpus = testing::small_corpus(2);
  auto cfg = quick_config();
  cfg.si_lambda = 0.5;
  const auto filters = session_filters(corpus.sessions);
  auto strategy = make_strategy(Method::SI, cfg);
  ModelState model;
  for (std::size_t n = 0; n < 2; ++n) {
    SessionContext ctx{&corpus.sessions, &filters, n, 3};
    strategy->train_session(model, ctx);
  }
  const auto state = strategy->save_state();
  CHECK(state.tensor("omega_entity").minCoeff() >= 0.0);
  CHECK(state.tensor("omega_relation").minCoeff() >= 0.0);
  CHECK(state.tensor("omega_entity").maxCoeff() > 0.0);
}

TEST_CASE("CWR merge") {
  SUBCASE("existing rows are averaged") {
    Matrix ce_e(1, 2), te_e(1, 2), r(1, 2);
    ce_e << 1.0, 0.0;
    te_e << 0.0, 1.0;
    r << 0.2, 0.2;
    auto ce = rows_model(ce_e, r);
    const auto te = rows_model(te_e, r);
    const EntityId ids[] = {0};
    const RelationId rids[] = {0};
    cwr_merge(ce, te, ids, rids);
    CHECK(ce.entity_emb(0, 0) == 0.5);
    CHECK(ce.entity_emb(0, 1) == 0.5);
    CHECK(ce.relation_emb(0, 0) == doctest::Approx(0.2));
  }
  SUBCASE("a fresh store copies the temporary rows") {
    Rng rng(5);
    ModelState ce;
    const auto te = rows_model(oracle::random_matrix(3, 2, rng), oracle::random_matrix(2, 2, rng));
    const EntityId ids[] = {0, 1, 2};
    const RelationId rids[] = {0, 1};
    cwr_merge(ce, te, ids, rids);
    CHECK(ce.entity_emb == te.entity_emb);
    CHECK(ce.relation_emb == te.relation_emb);
  }
  SUBCASE("merging identical rows is idempotent") {
    Rng rng(6);
    auto ce = rows_model(oracle::random_matrix(4, 3, rng), oracle::random_matrix(2, 3, rng));
    const auto before = ce;
    const EntityId ids[] = {0, 1, 2, 3};
    const RelationId rids[] = {0, 1};
    cwr_merge(ce, before, ids, rids);
    CHECK(ce.entity_emb == before.entity_emb);
    CHECK(ce.relation_emb == before.relation_emb);
  }
  SUBCASE("disjoint vocabularies concatenate in id order") {
    Rng rng(7);
    ModelState ce;
    const auto a = rows_model(oracle::random_matrix(2, 2, rng), oracle::random_matrix(1, 2, rng));
    const auto b = rows_model(oracle::random_matrix(2, 2, rng), oracle::random_matrix(1, 2, rng));
    const EntityId ids_a[] = {0, 1}, ids_b[] = {2, 3};
    const RelationId r_a[] = {0}, r_b[] = {1};
    cwr_merge(ce, a, ids_a, r_a);
    cwr_merge(ce, b, ids_b, r_b);
    REQUIRE(ce.entity_emb.rows() == 4);
    CHECK(ce.entity_emb.topRows(2) == a.entity_emb);
    CHECK(ce.entity_emb.bottomRows(2) == b.entity_emb);
    CHECK(ce.relation_emb.row(1) == b.relation_emb.row(0));
  }
}

TEST_CASE("CWR store grows with the observed vocabulary") {
  const auto corpus = testing::small_corpus(4);
  const auto run = run_sessions(Method::CWR, quick_config(), corpus, 1, 3);
  std::size_t previous = 0;
  for (std::size_t n = 0; n < 3; ++n) {
    CHECK(run.models[n].num_entities() == corpus.sessions[n].observed_entities.size());
    CHECK(run.models[n].num_relations() == corpus.sessions[n].observed_relations.size());
    CHECK(run.models[n].num_entities() >= previous);
    previous = run.models[n].num_entities();
  }
}

TEST_CASE("Finetune and Batch coincide on the first session") {
  const auto corpus = testing::small_corpus(5);
  const auto cfg = quick_config();
  const auto f = run_sessions(Method::Finetune, cfg, corpus, 9, 1);
  const auto b = run_sessions(Method::Batch, cfg, corpus, 9, 1);
  CHECK(f.models[0].entity_emb == b.models[0].entity_emb);
  CHECK(f.models[0].relation_emb == b.models[0].relation_emb);
  CHECK(b.outcomes[0].stored_bytes == 0.0);
}

TEST_CASE("Batch retrains from scratch on every session seen so far") {
  const auto corpus = testing::small_corpus(6);
  const auto cfg = quick_config();
  const std::uint64_t seed = 4;
  const auto run = run_sessions(Method::Batch, cfg, corpus, seed, 3);

  const auto filters = session_filters(corpus.sessions);
  const std::size_t n = 2;
  const auto& s = corpus.sessions[n];
  TripleList all;
  for (std::size_t i = 0; i <= n; ++i) all.insert(all.end(), corpus.sessions[i].train.begin(), corpus.sessions[i].train.end());
  Rng init = Rng::derive(seed, "expand", n);
  ModelState manual = init_model(cfg.kind, s.observed_entities.size(), s.observed_relations.size(), cfg.dim, init);
  const TripleSet known = to_set(all);
  SolverData data;
  data.train = all;
  data.negative_candidates = s.observed_entities;
  data.known_positives = &known;
  data.valid = s.valid;
  data.eval_candidates = s.observed_entities;
  data.eval_filter = &filters[n];
  Rng rng = Rng::derive(seed, "train", n);
  train_solver(manual, data, cfg.solver, rng);

  CHECK(run.models[n].entity_emb == manual.entity_emb);
  CHECK(run.models[n].relation_emb == manual.relation_emb);
  const double earlier = static_cast<double>(corpus.sessions[0].train.size() + corpus.sessions[1].train.size());
  CHECK(run.outcomes[n].stored_bytes == kBytesPerTriple * earlier);
}

TEST_CASE("Batch without retention behaves as Finetune") {
  const auto corpus = testing::small_corpus(7);
  auto cfg = quick_config();
  cfg.retain_samples = false;
  const auto b = run_sessions(Method::Batch, cfg, corpus, 2, 3);
  const auto f = run_sessions(Method::Finetune, cfg, corpus, 2, 3);
  CHECK(b.models[2].entity_emb == f.models[2].entity_emb);
  for (const auto& o : b.outcomes) CHECK(o.stored_bytes == 0.0);
}

TEST_CASE("PNN leaves rows from earlier sessions bit-identical") {
  const auto corpus = testing::small_corpus(8);
  const auto run = run_sessions(Method::PNN, quick_config(), corpus, 5, 3);
  for (std::size_t n = 1; n < 3; ++n) {
    const auto& before = run.models[n - 1];
    const auto& after = run.models[n];
    const auto ne = before.entity_emb.rows(), nr = before.relation_emb.rows();
    CHECK((after.entity_emb.topRows(ne) - before.entity_emb).cwiseAbs().maxCoeff() == 0.0);
    CHECK((after.relation_emb.topRows(nr) - before.relation_emb).cwiseAbs().maxCoeff() == 0.0);
    if (after.entity_emb.rows() > ne) {
      CHECK(after.entity_emb.bottomRows(after.entity_emb.rows() - ne).norm() > 0.0);
    }
  }
}

TEST_CASE("regularised methods move old rows less than Finetune") {
  const auto corpus = testing::small_corpus(9);
  auto cfg = quick_config();
  cfg.l2r_lambda = 50.0;
  const auto f = run_sessions(Method::Finetune, cfg, corpus, 3, 2);
  const auto l = run_sessions(Method::L2R, cfg, corpus, 3, 2);
  CHECK(f.models[0].entity_emb == l.models[0].entity_emb);
  const auto ne = f.models[0].entity_emb.rows();
  const double drift_f = (f.models[1].entity_emb.topRows(ne) - f.models[0].entity_emb).norm();
  const double drift_l = (l.models[1].entity_emb.topRows(ne) - l.models[0].entity_emb).norm();
  CHECK(drift_l < drift_f);
}

TEST_CASE("sessions must arrive in order") {
  const auto corpus = testing::small_corpus(10);
  const auto filters = session_filters(corpus.sessions);
  auto strategy = make_strategy(Method::Finetune, quick_config());
  ModelState model;
  SessionContext skip{&corpus.sessions, &filters, 1, 0};
  CHECK_THROWS_AS(strategy->train_session(model, skip), ConfigError);
  SessionContext first{&corpus.sessions, &filters, 0, 0};
  CHECK_NOTHROW(strategy->train_session(model, first));
  CHECK_THROWS_AS(strategy->train_session(model, first), ConfigError);
}

TEST_CASE("method byte accounting") {
  const auto corpus = testing::small_corpus(11);
  const auto cfg = quick_config();
  const auto per_param = [](const ModelState& m) { return kBytesPerParameter * static_cast<double>(m.parameter_count()); };

  const auto f = run_sessions(Method::Finetune, cfg, corpus, 1, 2);
  CHECK(f.outcomes[1].model_bytes == per_param(f.models[1]));
  CHECK(f.outcomes[1].stored_bytes == 0.0);

  const auto l = run_sessions(Method::L2R, cfg, corpus, 1, 2);
  CHECK(l.outcomes[1].model_bytes == per_param(l.models[1]) + per_param(l.models[0]));

  const auto d = run_sessions(Method::DGR, cfg, corpus, 1, 2);
  CHECK(d.outcomes[1].model_bytes > per_param(d.models[1]));
  CHECK(d.outcomes[1].stored_bytes == 0.0);
}

TEST_CASE("DGR traces generator epochs before solver epochs") {
  const auto corpus = testing::small_corpus(12);
  auto cfg = quick_config();
  const auto run = run_sessions(Method::DGR, cfg, corpus, 2, 2);
  for (const auto& o : run.outcomes) {
    REQUIRE(o.trace.size() == cfg.generator.epochs + cfg.solver.max_epochs);
    for (std::size_t e = 0; e < cfg.generator.epochs; ++e) CHECK(o.trace[e].generator);
    for (std::size_t e = cfg.generator.epochs; e < o.trace.size(); ++e) CHECK_FALSE(o.trace[e].generator);
    // The solver has not moved while the generator trains.
    CHECK(o.trace[0].hits10 == o.trace[cfg.generator.epochs - 1].hits10);
  }
}

TEST_CASE("DGR state survives a checkpoint round trip") {
  testing::TempDir dir("dgr-state");
  const auto corpus = testing::small_corpus(13);
  const auto cfg = quick_config();
  const auto filters = session_filters(corpus.sessions);

  auto straight = make_strategy(Method::DGR, cfg);
  ModelState a;
  for (std::size_t n = 0; n < 2; ++n) {
    SessionContext ctx{&corpus.sessions, &filters, n, 6};
    straight->train_session(a, ctx);
  }

  auto first = make_strategy(Method::DGR, cfg);
  ModelState b;
  SessionContext ctx0{&corpus.sessions, &filters, 0, 6};
  first->train_session(b, ctx0);
  first->save_state().write(dir / "method_state.ckpt");
  first->save_extra(dir.path());
  CHECK(std::filesystem::exists(dir / "generator.ckpt"));

  auto resumed = make_strategy(Method::DGR, cfg);
  resumed->load_state(Checkpoint::read(dir / "method_state.ckpt"), b);
  resumed->load_extra(dir.path());
  SessionContext ctx1{&corpus.sessions, &filters, 1, 6};
  resumed->train_session(b, ctx1);
  CHECK(a.entity_emb == b.entity_emb);
  CHECK(a.relation_emb == b.relation_emb);

  auto other = make_strategy(Method::SI, cfg);
  CHECK_THROWS_AS(other->load_state(Checkpoint::read(dir / "method_state.ckpt"), b), DataError);
}

TEST_CASE("method names") {
  for (auto m : all_methods()) CHECK(parse_method(to_string(m)) == m);
  CHECK(all_methods().size() == 7);
  CHECK_THROWS_AS(parse_method("ewc"), ConfigError);
}
