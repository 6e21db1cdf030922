#include "ckge/methods.hpp"

#include <algorithm>
#include <iostream>
#include <numeric>
#include <string>

#include "ckge/errors.hpp"

namespace ckge {

std::string_view to_string(Method method) {
  switch (method) {
    case Method::Batch: return "batch";
    case Method::Finetune: return "finetune";
    case Method::PNN: return "pnn";
    case Method::CWR: return "cwr";
    case Method::L2R: return "l2r";
    case Method::SI: return "si";
    case Method::DGR: return "dgr";
  }
  return "finetune";
}

Method parse_method(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (Method m : all_methods()) {
    if (to_string(m) == lower) return m;
  }
  throw ConfigError("unknown method '" + std::string(text) + "'");
}

const std::vector<Method>& all_methods() {
  static const std::vector<Method> methods = {Method::Batch, Method::Finetune, Method::PNN, Method::CWR,
                                              Method::L2R,   Method::SI,       Method::DGR};
  return methods;
}

namespace {

PenaltyResult weighted_penalty(const ModelState& model, const ModelState& snapshot, const Matrix* omega_e,
                               const Matrix* omega_r, double lambda, bool squared) {
  if (lambda < 0.0) throw ConfigError("regularization strength must be non-negative");
  if (snapshot.dim != 0 && snapshot.dim != model.dim) {
    throw std::invalid_argument("snapshot dimension differs from the model");
  }
  PenaltyResult out{0.0, Gradients(model.dim)};
  auto table = [&](const Matrix& cur, const Matrix& prev, const Matrix* omega, RowGradients& grads) {
    if (prev.rows() > cur.rows()) throw std::invalid_argument("snapshot has more rows than the model");
    if (omega && (omega->rows() < prev.rows() || omega->cols() != cur.cols())) {
      throw std::invalid_argument("importance matrix does not cover the snapshot");
    }
    for (Eigen::Index i = 0; i < prev.rows(); ++i) {
      bool touched = false;
      for (Eigen::Index k = 0; k < cur.cols(); ++k) {
        double w = omega ? (*omega)(i, k) : 1.0;
        if (squared) w *= w;
        const double delta = cur(i, k) - prev(i, k);
        out.penalty += lambda * w * delta * delta;
        if (w * delta != 0.0) touched = true;
      }
      if (!touched) continue;
      auto g = grads.row(static_cast<std::uint32_t>(i));
      for (Eigen::Index k = 0; k < cur.cols(); ++k) {
        double w = omega ? (*omega)(i, k) : 1.0;
        if (squared) w *= w;
        g[static_cast<std::size_t>(k)] += 2.0 * lambda * w * (cur(i, k) - prev(i, k));
      }
    }
  };
  table(model.entity_emb, snapshot.entity_emb, omega_e, out.grads.entity);
  table(model.relation_emb, snapshot.relation_emb, omega_r, out.grads.relation);
  return out;
}

void grow_rows(Matrix& m, Eigen::Index rows, Eigen::Index cols) {
  if (m.cols() != cols) {
    m = Matrix::Zero(rows, cols);
    return;
  }
  const auto old = m.rows();
  if (rows <= old) return;
  m.conservativeResize(rows, cols);
  m.bottomRows(rows - old).setZero();
}

double params_bytes(const ModelState& m) {
  return kBytesPerParameter * static_cast<double>(m.parameter_count());
}

}  // namespace

PenaltyResult l2r_penalty(const ModelState& model, const ModelState& snapshot, double lambda) {
  return weighted_penalty(model, snapshot, nullptr, nullptr, lambda, false);
}

PenaltyResult si_penalty(const ModelState& model, const ModelState& snapshot, const Matrix& omega_entity,
                         const Matrix& omega_relation, double lambda, bool squared_importance) {
  return weighted_penalty(model, snapshot, &omega_entity, &omega_relation, lambda, squared_importance);
}

void si_resize(SiState& si, const ModelState& model) {
  const auto d = static_cast<Eigen::Index>(model.dim);
  grow_rows(si.omega_entity, model.entity_emb.rows(), d);
  grow_rows(si.omega_relation, model.relation_emb.rows(), d);
  grow_rows(si.path_entity, model.entity_emb.rows(), d);
  grow_rows(si.path_relation, model.relation_emb.rows(), d);
}

void si_accumulate(SiState& si, const Gradients& grads, const Gradients& applied) {
  auto one = [](Matrix& path, const RowGradients& g, const RowGradients& delta) {
    if (g.cols() != delta.cols() && !delta.empty()) throw std::invalid_argument("gradient/update shape mismatch");
    for (std::size_t s = 0; s < g.size(); ++s) {
      const auto id = g.id(s);
      const auto d = delta.find(id);
      if (d.empty()) continue;
      if (id >= path.rows() || static_cast<Eigen::Index>(d.size()) != path.cols()) {
        throw std::invalid_argument("SI accumulator does not match the gradient shape");
      }
      const auto gv = g.values(s);
      for (std::size_t k = 0; k < gv.size(); ++k) path(id, static_cast<Eigen::Index>(k)) -= gv[k] * d[k];
    }
  };
  one(si.path_entity, grads.entity, applied.entity);
  one(si.path_relation, grads.relation, applied.relation);
}

void si_consolidate(SiState& si, const ModelState& start, const ModelState& end, double xi) {
  if (!(xi > 0.0)) throw ConfigError("SI damping must be positive");
  auto one = [xi](Matrix& omega, Matrix& path, const Matrix& a, const Matrix& b) {
    if (omega.rows() != b.rows() || path.rows() != b.rows()) {
      throw std::invalid_argument("SI state does not match the model shape");
    }
    for (Eigen::Index i = 0; i < b.rows(); ++i) {
      for (Eigen::Index k = 0; k < b.cols(); ++k) {
        const double delta = i < a.rows() ? b(i, k) - a(i, k) : 0.0;
        omega(i, k) += std::max(0.0, path(i, k)) / (delta * delta + xi);
      }
    }
    path.setZero();
  };
  one(si.omega_entity, si.path_entity, start.entity_emb, end.entity_emb);
  one(si.omega_relation, si.path_relation, start.relation_emb, end.relation_emb);
}

void cwr_merge(ModelState& ce, const ModelState& te, std::span<const EntityId> local_entities,
               std::span<const RelationId> local_relations) {
  if (static_cast<std::size_t>(te.entity_emb.rows()) != local_entities.size() ||
      static_cast<std::size_t>(te.relation_emb.rows()) != local_relations.size()) {
    throw std::invalid_argument("temporary embeddings do not match the local vocabulary");
  }
  if (ce.dim == 0) {
    ce.kind = te.kind;
    ce.dim = te.dim;
    ce.entity_emb.resize(0, static_cast<Eigen::Index>(te.dim));
    ce.relation_emb.resize(0, static_cast<Eigen::Index>(te.dim));
  }
  if (ce.dim != te.dim || ce.kind != te.kind) throw std::invalid_argument("CE and TE differ in shape");

  auto merge = [](Matrix& store, const Matrix& temp, std::span<const std::uint32_t> ids) {
    const auto old = store.rows();
    Eigen::Index needed = old;
    for (auto id : ids) needed = std::max<Eigen::Index>(needed, static_cast<Eigen::Index>(id) + 1);
    if (needed > old) {
      store.conservativeResize(needed, store.cols());
      store.bottomRows(needed - old).setZero();
    }
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto g = static_cast<Eigen::Index>(ids[k]);
      const auto row = temp.row(static_cast<Eigen::Index>(k));
      if (g < old) store.row(g) = 0.5 * (store.row(g) + row);
      else store.row(g) = row;
    }
  };
  merge(ce.entity_emb, te.entity_emb, local_entities);
  merge(ce.relation_emb, te.relation_emb, local_relations);
}

// ---- Strategy base ----

SessionOutcome Strategy::train_session(ModelState& model, const SessionContext& ctx) {
  if (!ctx.sessions || !ctx.filters || ctx.index >= ctx.sessions->size()) {
    throw std::invalid_argument("session context is incomplete");
  }
  if (ctx.index != next_session_) {
    throw ConfigError("sessions must be trained in order: expected session " + std::to_string(next_session_) +
                      ", got " + std::to_string(ctx.index));
  }
  auto outcome = run(model, ctx);
  ++next_session_;
  return outcome;
}

Checkpoint Strategy::save_state() const {
  Checkpoint c;
  c.set("type", "method_state");
  c.set("method", std::string(to_string(method())));
  c.set("next_session", std::to_string(next_session_));
  return c;
}

void Strategy::load_state(const Checkpoint& ckpt, const ModelState&) {
  if (!ckpt.has("method") || ckpt.get("method") != to_string(method())) {
    throw DataError("method state belongs to a different method");
  }
  next_session_ = ckpt.get_size("next_session");
}

void Strategy::save_extra(const std::filesystem::path&) const {}
void Strategy::load_extra(const std::filesystem::path&) {}

void Strategy::expand_to_session(ModelState& model, const SessionContext& ctx) const {
  const auto& s = (*ctx.sessions)[ctx.index];
  const std::size_t ne = s.observed_entities.size();
  const std::size_t nr = s.observed_relations.size();
  if ((ne > 0 && s.observed_entities.back() + 1 != ne) || (nr > 0 && s.observed_relations.back() + 1 != nr)) {
    throw DataError("session ids are not in arrival order; resample the sessions");
  }
  Rng rng = Rng::derive(ctx.seed, "expand", ctx.index);
  if (model.dim == 0) {
    model = init_model(cfg_.kind, ne, nr, cfg_.dim, rng);
  } else {
    expand_model(model, ne, nr, rng);
  }
}

SolverData Strategy::solver_data(const SessionContext& ctx, std::span<const Triple> train,
                                 const TripleSet& known) const {
  const auto& s = (*ctx.sessions)[ctx.index];
  SolverData d;
  d.train = train;
  d.negative_candidates = s.observed_entities;
  d.known_positives = &known;
  d.valid = s.valid.empty() ? std::span<const Triple>(s.train) : std::span<const Triple>(s.valid);
  d.eval_candidates = s.observed_entities;
  d.eval_filter = &(*ctx.filters)[ctx.index];
  return d;
}

Rng Strategy::train_rng(const SessionContext& ctx) const { return Rng::derive(ctx.seed, "train", ctx.index); }

namespace {

class FinetuneStrategy : public Strategy {
 public:
  explicit FinetuneStrategy(MethodConfig cfg) : Strategy(std::move(cfg)) {}
  Method method() const override { return Method::Finetune; }

 protected:
  SessionOutcome run(ModelState& model, const SessionContext& ctx) override {
    const auto& s = (*ctx.sessions)[ctx.index];
    expand_to_session(model, ctx);
    const TripleSet known = to_set(s.train);
    Rng rng = train_rng(ctx);
    SessionOutcome out;
    out.trace = train_solver(model, solver_data(ctx, s.train, known), cfg_.solver, rng);
    out.model_bytes = params_bytes(model);
    return out;
  }
};

class BatchStrategy : public Strategy {
 public:
  explicit BatchStrategy(MethodConfig cfg) : Strategy(std::move(cfg)) {}
  Method method() const override { return Method::Batch; }

 protected:
  SessionOutcome run(ModelState& model, const SessionContext& ctx) override {
    const auto& sessions = *ctx.sessions;
    TripleList train;
    double retained = 0.0;
    if (cfg_.retain_samples) {
      for (std::size_t i = 0; i < ctx.index; ++i) {
        train.insert(train.end(), sessions[i].train.begin(), sessions[i].train.end());
      }
      retained = kBytesPerTriple * static_cast<double>(train.size());
      model = ModelState{};  // retrain from scratch on everything seen so far
    }
    const auto& s = sessions[ctx.index];
    train.insert(train.end(), s.train.begin(), s.train.end());
    expand_to_session(model, ctx);
    const TripleSet known = to_set(train);
    Rng rng = train_rng(ctx);
    SessionOutcome out;
    out.trace = train_solver(model, solver_data(ctx, train, known), cfg_.solver, rng);
    out.model_bytes = params_bytes(model);
    out.stored_bytes = retained;
    return out;
  }
};

class PnnStrategy : public Strategy {
 public:
  explicit PnnStrategy(MethodConfig cfg) : Strategy(std::move(cfg)) {}
  Method method() const override { return Method::PNN; }

 protected:
  SessionOutcome run(ModelState& model, const SessionContext& ctx) override {
    const auto& s = (*ctx.sessions)[ctx.index];
    const FreezeMask mask = FreezeMask::prefix(model.num_entities(), model.num_relations());
    expand_to_session(model, ctx);
    const TripleSet known = to_set(s.train);
    Rng rng = train_rng(ctx);
    SolverHooks hooks;
    hooks.mask = &mask;
    SessionOutcome out;
    out.trace = train_solver(model, solver_data(ctx, s.train, known), cfg_.solver, rng, hooks);
    out.model_bytes = params_bytes(model);
    return out;
  }
};

class CwrStrategy : public Strategy {
 public:
  explicit CwrStrategy(MethodConfig cfg) : Strategy(std::move(cfg)) {}
  Method method() const override { return Method::CWR; }

 protected:
  SessionOutcome run(ModelState& ce, const SessionContext& ctx) override {
    const auto& s = (*ctx.sessions)[ctx.index];
    std::vector<std::uint32_t> entity_local(s.observed_entities.size(), 0);
    std::vector<std::uint32_t> relation_local(s.observed_relations.size(), 0);
    for (std::size_t k = 0; k < s.entities.size(); ++k) entity_local[s.entities[k]] = static_cast<std::uint32_t>(k);
    for (std::size_t k = 0; k < s.relations.size(); ++k) relation_local[s.relations[k]] = static_cast<std::uint32_t>(k);
    TripleList local_train;
    local_train.reserve(s.train.size());
    for (const auto& t : s.train) {
      local_train.push_back({entity_local[t.head], relation_local[t.relation], entity_local[t.tail]});
    }
    std::vector<EntityId> local_candidates(s.entities.size());
    std::iota(local_candidates.begin(), local_candidates.end(), EntityId{0});
    const TripleSet known = to_set(local_train);

    Rng init = Rng::derive(ctx.seed, "cwr-te", ctx.index);
    ModelState te = init_model(cfg_.kind, s.entities.size(), s.relations.size(), cfg_.dim, init);

    SolverData data = solver_data(ctx, local_train, known);
    data.negative_candidates = local_candidates;
    if (s.valid.empty()) data.valid = s.train;  // global ids, scored through the merged view
    SolverHooks hooks;
    hooks.eval_view = [&](const ModelState& temp) {
      ModelState merged = ce;
      cwr_merge(merged, temp, s.entities, s.relations);
      return merged;
    };
    Rng rng = train_rng(ctx);
    SessionOutcome out;
    out.trace = train_solver(te, data, cfg_.solver, rng, hooks);
    cwr_merge(ce, te, s.entities, s.relations);
    out.model_bytes = params_bytes(ce) + params_bytes(te);
    return out;
  }
};

class L2rStrategy : public Strategy {
 public:
  explicit L2rStrategy(MethodConfig cfg) : Strategy(std::move(cfg)) {}
  Method method() const override { return Method::L2R; }

 protected:
  SessionOutcome run(ModelState& model, const SessionContext& ctx) override {
    const auto& s = (*ctx.sessions)[ctx.index];
    const ModelState snapshot = model;
    expand_to_session(model, ctx);
    const TripleSet known = to_set(s.train);
    QuadraticAnchor anchor{&snapshot, nullptr, nullptr, cfg_.l2r_lambda, false};
    SolverHooks hooks;
    if (snapshot.dim != 0) hooks.anchor = &anchor;
    Rng rng = train_rng(ctx);
    SessionOutcome out;
    out.trace = train_solver(model, solver_data(ctx, s.train, known), cfg_.solver, rng, hooks);
    out.model_bytes = params_bytes(model) + params_bytes(snapshot);
    return out;
  }
};

class SiStrategy : public Strategy {
 public:
  explicit SiStrategy(MethodConfig cfg) : Strategy(std::move(cfg)) {}
  Method method() const override { return Method::SI; }

  Checkpoint save_state() const override {
    Checkpoint c = Strategy::save_state();
    c.add_tensor("omega_entity", si_.omega_entity);
    c.add_tensor("omega_relation", si_.omega_relation);
    return c;
  }

  void load_state(const Checkpoint& ckpt, const ModelState& model) override {
    Strategy::load_state(ckpt, model);
    si_.omega_entity = ckpt.tensor("omega_entity");
    si_.omega_relation = ckpt.tensor("omega_relation");
    si_.path_entity = Matrix::Zero(si_.omega_entity.rows(), si_.omega_entity.cols());
    si_.path_relation = Matrix::Zero(si_.omega_relation.rows(), si_.omega_relation.cols());
  }

 protected:
  SessionOutcome run(ModelState& model, const SessionContext& ctx) override {
    const auto& s = (*ctx.sessions)[ctx.index];
    const ModelState snapshot = model;
    expand_to_session(model, ctx);
    si_resize(si_, model);
    const ModelState start = model;
    const TripleSet known = to_set(s.train);
    QuadraticAnchor anchor{&snapshot, &si_.omega_entity, &si_.omega_relation, cfg_.si_lambda,
                           cfg_.si_squared_importance};
    SolverHooks hooks;
    if (snapshot.dim != 0) hooks.anchor = &anchor;
    hooks.after_step = [this](const Gradients& g, const Gradients& applied) { si_accumulate(si_, g, applied); };
    Rng rng = train_rng(ctx);
    SessionOutcome out;
    out.trace = train_solver(model, solver_data(ctx, s.train, known), cfg_.solver, rng, hooks);
    si_consolidate(si_, start, model, cfg_.si_xi);
    out.model_bytes = params_bytes(model) + params_bytes(snapshot) +
                      kBytesPerParameter * static_cast<double>(si_.omega_entity.size() + si_.omega_relation.size() +
                                                               si_.path_entity.size() + si_.path_relation.size());
    return out;
  }

 private:
  SiState si_;
};

class DgrStrategy : public Strategy {
 public:
  explicit DgrStrategy(MethodConfig cfg) : Strategy(std::move(cfg)) {}
  Method method() const override { return Method::DGR; }

  void save_extra(const std::filesystem::path& dir) const override {
    if (has_generator_) generator_checkpoint(generator_).write(dir / "generator.ckpt");
  }

  void load_extra(const std::filesystem::path& dir) override {
    const auto file = dir / "generator.ckpt";
    has_generator_ = std::filesystem::exists(file);
    if (has_generator_) generator_ = generator_from_checkpoint(Checkpoint::read(file));
  }

 protected:
  SessionOutcome run(ModelState& model, const SessionContext& ctx) override {
    const auto& sessions = *ctx.sessions;
    const auto& s = sessions[ctx.index];
    TripleList combined;
    if (ctx.index > 0) {
      if (!has_generator_) throw DataError("DGR session " + std::to_string(ctx.index) + " has no generator");
      std::size_t count = 0;
      for (std::size_t i = 0; i < ctx.index; ++i) count += sessions[i].train.size();
      Rng replay_rng = Rng::derive(ctx.seed, "replay", ctx.index);
      combined = sample_triples(generator_, count, replay_rng, cfg_.generator.sample_greedy);
    }
    combined.insert(combined.end(), s.train.begin(), s.train.end());
    const TripleSet known = to_set(combined);

    expand_to_session(model, ctx);
    const SolverData data = solver_data(ctx, combined, known);

    // The generator trains first; the solver has not moved during those
    // epochs, so they are traced with the solver's measure at session start.
    const SplitMetrics before = trace_metrics(model, data, cfg_.solver);
    Rng gen_init = Rng::derive(ctx.seed, "generator-init", ctx.index);
    if (!has_generator_) {
      generator_ = init_generator(s.observed_entities.size(), s.observed_relations.size(), cfg_.generator, gen_init);
      has_generator_ = true;
    } else {
      expand_generator(generator_, s.observed_entities.size(), s.observed_relations.size(), gen_init);
    }
    SessionOutcome out;
    Rng gen_rng = Rng::derive(ctx.seed, "generator", ctx.index);
    train_generator(generator_, combined, cfg_.generator, gen_rng, [&](const GeneratorEpoch& e) {
      TraceEntry entry;
      entry.epoch = e.epoch;
      entry.generator = true;
      entry.hits10 = before.hits10;
      entry.mrr = before.mrr;
      entry.loss = e.mean.loss;
      out.trace.push_back(entry);
    });

    Rng rng = train_rng(ctx);
    const auto solver_trace = train_solver(model, data, cfg_.solver, rng);
    out.trace.insert(out.trace.end(), solver_trace.begin(), solver_trace.end());
    out.model_bytes = params_bytes(model) + kBytesPerParameter * static_cast<double>(generator_.parameter_count());
    return out;
  }

 private:
  GeneratorParams generator_;
  bool has_generator_ = false;
};

}  // namespace

std::unique_ptr<Strategy> make_strategy(Method method, const MethodConfig& cfg) {
  switch (method) {
    case Method::Batch: return std::make_unique<BatchStrategy>(cfg);
    case Method::Finetune: return std::make_unique<FinetuneStrategy>(cfg);
    case Method::PNN: return std::make_unique<PnnStrategy>(cfg);
    case Method::CWR: return std::make_unique<CwrStrategy>(cfg);
    case Method::L2R: return std::make_unique<L2rStrategy>(cfg);
    case Method::SI: return std::make_unique<SiStrategy>(cfg);
    case Method::DGR: return std::make_unique<DgrStrategy>(cfg);
  }
  throw ConfigError("unknown method");
}

}  // namespace ckge
