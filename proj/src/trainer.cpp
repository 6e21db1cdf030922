#include "ckge/trainer.hpp"

#include <algorithm>
#include <numeric>

#include "ckge/errors.hpp"

namespace ckge {

void apply_anchor(ModelState& model, const QuadraticAnchor& anchor, double lr, const FreezeMask* mask) {
  if (!anchor.anchor || anchor.lambda == 0.0) return;
  if (anchor.lambda < 0.0) throw ConfigError("regularization strength must be non-negative");
  const double base = 2.0 * lr * anchor.lambda;
  auto pull = [&](Matrix& rows, const Matrix& target, const Matrix* importance, bool entity) {
    const auto n = std::min(rows.rows(), target.rows());
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto id = static_cast<std::uint32_t>(i);
      if (mask && (entity ? mask->entity_frozen(id) : mask->relation_frozen(id))) continue;
      for (Eigen::Index k = 0; k < rows.cols(); ++k) {
        double w = importance ? (*importance)(i, k) : 1.0;
        if (anchor.squared_importance) w *= w;
        const double c = base * w;
        rows(i, k) = (rows(i, k) + c * target(i, k)) / (1.0 + c);
      }
    }
  };
  pull(model.entity_emb, anchor.anchor->entity_emb, anchor.entity_importance, true);
  pull(model.relation_emb, anchor.anchor->relation_emb, anchor.relation_importance, false);
}

LossResult batch_loss(const ModelState& model, const TrainBatch& batch, double margin) {
  return model.kind == ModelKind::TransE ? transe_loss_grad(model, batch, margin)
                                         : analogy_loss_grad(model, batch);
}

SplitMetrics trace_metrics(const ModelState& model, const SolverData& data, const SolverConfig& cfg) {
  if (data.valid.empty() || !data.eval_filter) return {};
  auto valid = data.valid;
  if (cfg.trace_max_triples > 0 && valid.size() > cfg.trace_max_triples) {
    valid = valid.first(cfg.trace_max_triples);
  }
  return eval_split(model, valid, data.eval_candidates, *data.eval_filter, cfg.ties);
}

namespace {

// Copies the current values of every row touched by `grads`.
Gradients snapshot_rows(const ModelState& model, const Gradients& grads) {
  Gradients out(model.dim);
  for (std::size_t s = 0; s < grads.entity.size(); ++s) {
    const auto id = grads.entity.id(s);
    auto dst = out.entity.row(id);
    const double* src = model.entity_emb.row(id).data();
    std::copy(src, src + model.dim, dst.begin());
  }
  for (std::size_t s = 0; s < grads.relation.size(); ++s) {
    const auto id = grads.relation.id(s);
    auto dst = out.relation.row(id);
    const double* src = model.relation_emb.row(id).data();
    std::copy(src, src + model.dim, dst.begin());
  }
  return out;
}

// Turns a row snapshot into (current - snapshot) in place.
void rows_delta(const ModelState& model, Gradients& snap) {
  for (std::size_t s = 0; s < snap.entity.size(); ++s) {
    auto v = snap.entity.values(s);
    const double* cur = model.entity_emb.row(snap.entity.id(s)).data();
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = cur[k] - v[k];
  }
  for (std::size_t s = 0; s < snap.relation.size(); ++s) {
    auto v = snap.relation.values(s);
    const double* cur = model.relation_emb.row(snap.relation.id(s)).data();
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = cur[k] - v[k];
  }
}

}  // namespace

TrainTrace train_solver(ModelState& model, const SolverData& data, const SolverConfig& cfg, Rng& rng,
                        const SolverHooks& hooks) {
  if (data.train.empty()) throw DataError("no training triples for this session");
  if (cfg.batch_size == 0) throw ConfigError("batch size must be positive");
  if (!(cfg.lr > 0.0)) throw ConfigError("learning rate must be positive");

  std::vector<std::size_t> order(data.train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  TrainTrace trace;
  double best_mrr = -1.0;
  std::size_t bad_checks = 0;
  TrainBatch batch;
  batch.ratio = cfg.negative_ratio;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.positives.clear();
      for (std::size_t k = start; k < end; ++k) batch.positives.push_back(data.train[order[k]]);
      batch.negatives = corrupt_negatives(batch.positives, data.negative_candidates, cfg.negative_ratio,
                                          rng, data.known_positives)
                            .negatives;
      const auto loss = batch_loss(model, batch, cfg.margin);
      epoch_loss += loss.loss;

      Gradients before;
      if (hooks.after_step) before = snapshot_rows(model, loss.grads);
      sgd_step(model, loss.grads, cfg.lr, hooks.mask);
      if (hooks.anchor) apply_anchor(model, *hooks.anchor, cfg.lr, hooks.mask);
      if (hooks.after_step) {
        rows_delta(model, before);
        hooks.after_step(loss.grads, before);
      }
    }

    TraceEntry entry;
    entry.epoch = epoch;
    entry.loss = epoch_loss / static_cast<double>(data.train.size());
    const SplitMetrics m =
        hooks.eval_view ? trace_metrics(hooks.eval_view(model), data, cfg) : trace_metrics(model, data, cfg);
    entry.hits10 = m.hits10;
    entry.mrr = m.mrr;
    trace.push_back(entry);

    if (cfg.eval_every > 0 && !data.valid.empty() && epoch % cfg.eval_every == 0) {
      if (m.mrr > best_mrr) {
        best_mrr = m.mrr;
        bad_checks = 0;
      } else if (++bad_checks >= cfg.patience) {
        break;
      }
    }
  }
  return trace;
}

}  // namespace ckge
