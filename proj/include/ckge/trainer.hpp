#pragma once

#include <functional>
#include <span>

#include "ckge/evaluation.hpp"
#include "ckge/kg_data.hpp"
#include "ckge/model.hpp"
#include "ckge/rng.hpp"

namespace ckge {

struct SolverConfig {
  double lr = 0.01;
  double margin = 1.0;
  std::size_t negative_ratio = 1;
  std::size_t batch_size = 128;
  std::size_t max_epochs = 500;
  std::size_t eval_every = 10;  // early-stopping check interval, 0 disables
  std::size_t patience = 3;     // checks without validation MRR improvement
  TiePolicy ties = TiePolicy::Optimistic;
  std::size_t trace_max_triples = 0;  // validation triples scored per epoch, 0 = all
};

// Quadratic pull towards an earlier state on the rows it covers:
// lambda * sum_k w_k (theta_k - anchor_k)^2, with w = 1 when no importance is
// given. It is applied after every optimizer step as the exact proximal
// update theta <- (theta + c anchor) / (1 + c), c = 2 lr lambda w, which
// agrees with a gradient step to first order and stays stable for large w.
struct QuadraticAnchor {
  const ModelState* anchor = nullptr;
  const Matrix* entity_importance = nullptr;    // anchor-shaped, or null
  const Matrix* relation_importance = nullptr;
  double lambda = 0.0;
  bool squared_importance = false;  // weight w^2 instead of w
};

void apply_anchor(ModelState& model, const QuadraticAnchor& anchor, double lr,
                  const FreezeMask* mask = nullptr);

struct SolverData {
  std::span<const Triple> train;
  std::span<const EntityId> negative_candidates;
  const TripleSet* known_positives = nullptr;  // excluded from negatives
  std::span<const Triple> valid;               // per-epoch trace measure
  std::span<const EntityId> eval_candidates;
  const TripleSet* eval_filter = nullptr;
};

struct SolverHooks {
  const FreezeMask* mask = nullptr;
  const QuadraticAnchor* anchor = nullptr;
  // Data-loss gradient of a step and the total change it made to those rows.
  std::function<void(const Gradients& grads, const Gradients& applied)> after_step;
  // Model scored for the trace and for early stopping; identity when empty.
  std::function<ModelState(const ModelState&)> eval_view;
};

// Loss of one batch under the model's own objective.
LossResult batch_loss(const ModelState& model, const TrainBatch& batch, double margin);

// Mini-batch SGD over `data.train`. Each epoch shuffles, draws fresh
// negatives, steps on every batch and appends one trace entry scored on
// `data.valid`. Stops early when validation MRR fails to improve for
// `patience` consecutive checks.
TrainTrace train_solver(ModelState& model, const SolverData& data, const SolverConfig& cfg, Rng& rng,
                        const SolverHooks& hooks = {});

// Validation measure of a model, using the same subsampling as the trace.
SplitMetrics trace_metrics(const ModelState& model, const SolverData& data, const SolverConfig& cfg);

}  // namespace ckge
