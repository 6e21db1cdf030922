#include "ckge/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "ckge/errors.hpp"

namespace ckge {

std::string_view to_string(ModelKind kind) {
  return kind == ModelKind::TransE ? "transe" : "analogy";
}

ModelKind parse_model_kind(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "transe") return ModelKind::TransE;
  if (lower == "analogy") return ModelKind::Analogy;
  throw ConfigError("unknown model '" + std::string(text) + "' (expected transe or analogy)");
}

namespace {

void check_triple(const ModelState& m, const Triple& t) {
  if (t.head >= m.num_entities() || t.tail >= m.num_entities() ||
      t.relation >= m.num_relations()) {
    std::ostringstream os;
    os << "triple (" << t.head << ", " << t.relation << ", " << t.tail
       << ") out of range for model with " << m.num_entities() << " entities and "
       << m.num_relations() << " relations";
    throw std::out_of_range(os.str());
  }
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void fill_uniform(Matrix& m, Eigen::Index first_row, double bound, Rng& rng) {
  for (Eigen::Index i = first_row; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-bound, bound);
}

void project_row(double* row, std::size_t n) {
  double sq = 0.0;
  for (std::size_t k = 0; k < n; ++k) sq += row[k] * row[k];
  if (sq > 1.0) {
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t k = 0; k < n; ++k) row[k] *= inv;
  }
}

}  // namespace

ModelState init_model(ModelKind kind, std::size_t num_entities, std::size_t num_relations,
                      std::size_t dim, Rng& rng) {
  if (dim == 0) throw ConfigError("embedding dimension must be positive");
  if (kind == ModelKind::Analogy && dim % 2 != 0) {
    throw ConfigError("Analogy needs an even embedding dimension, got " + std::to_string(dim));
  }
  ModelState m;
  m.kind = kind;
  m.dim = dim;
  m.entity_emb.resize(0, static_cast<Eigen::Index>(dim));
  m.relation_emb.resize(0, static_cast<Eigen::Index>(dim));
  expand_model(m, num_entities, num_relations, rng);
  return m;
}

void expand_model(ModelState& model, std::size_t num_entities, std::size_t num_relations,
                  Rng& rng) {
  const auto old_e = model.entity_emb.rows();
  const auto old_r = model.relation_emb.rows();
  if (static_cast<Eigen::Index>(num_entities) < old_e ||
      static_cast<Eigen::Index>(num_relations) < old_r) {
    throw std::invalid_argument("expand_model cannot shrink the embedding tables");
  }
  const auto d = static_cast<Eigen::Index>(model.dim);
  const double bound = 6.0 / std::sqrt(static_cast<double>(model.dim));
  model.entity_emb.conservativeResize(static_cast<Eigen::Index>(num_entities), d);
  model.relation_emb.conservativeResize(static_cast<Eigen::Index>(num_relations), d);
  fill_uniform(model.entity_emb, old_e, bound, rng);
  fill_uniform(model.relation_emb, old_r, bound, rng);
  if (model.kind == ModelKind::TransE) {
    for (auto i = old_e; i < model.entity_emb.rows(); ++i)
      project_row(model.entity_emb.row(i).data(), model.dim);
    for (auto i = old_r; i < model.relation_emb.rows(); ++i)
      project_row(model.relation_emb.row(i).data(), model.dim);
  }
}

Matrix relation_matrix(const ModelState& model, RelationId r) {
  const auto d = static_cast<Eigen::Index>(model.dim);
  Matrix w = Matrix::Zero(d, d);
  if (model.kind == ModelKind::TransE) {
    throw std::invalid_argument("relation_matrix is only defined for Analogy");
  }
  const auto row = model.relation_emb.row(r);
  for (Eigen::Index k = 0; k < d / 2; ++k) {
    const double a = row(2 * k);
    const double b = row(2 * k + 1);
    w(2 * k, 2 * k) = a;
    w(2 * k, 2 * k + 1) = b;
    w(2 * k + 1, 2 * k) = -b;
    w(2 * k + 1, 2 * k + 1) = a;
  }
  return w;
}

double transe_score(const ModelState& m, const Triple& t) {
  if (m.kind != ModelKind::TransE) throw std::invalid_argument("transe_score on a non-TransE model");
  check_triple(m, t);
  const double* h = m.entity_emb.row(t.head).data();
  const double* r = m.relation_emb.row(t.relation).data();
  const double* v = m.entity_emb.row(t.tail).data();
  double s = 0.0;
  for (std::size_t k = 0; k < m.dim; ++k) s += std::abs(h[k] + r[k] - v[k]);
  return s;
}

double analogy_score(const ModelState& m, const Triple& t) {
  if (m.kind != ModelKind::Analogy) {
    throw std::invalid_argument("analogy_score on a non-Analogy model");
  }
  check_triple(m, t);
  const double* h = m.entity_emb.row(t.head).data();
  const double* w = m.relation_emb.row(t.relation).data();
  const double* v = m.entity_emb.row(t.tail).data();
  double s = 0.0;
  for (std::size_t k = 0; k + 1 < m.dim; k += 2) {
    const double a = w[k], b = w[k + 1];
    const double x0 = h[k], x1 = h[k + 1];
    s += (x0 * a - x1 * b) * v[k] + (x0 * b + x1 * a) * v[k + 1];
  }
  return s;
}

double score(const ModelState& m, const Triple& t) {
  return m.kind == ModelKind::TransE ? transe_score(m, t) : analogy_score(m, t);
}

double goodness(const ModelState& m, const Triple& t) {
  return m.kind == ModelKind::TransE ? -transe_score(m, t) : analogy_score(m, t);
}

std::span<double> RowGradients::row(std::uint32_t id) {
  auto [it, inserted] = slots_.try_emplace(id, ids_.size());
  if (inserted) {
    ids_.push_back(id);
    values_.resize(values_.size() + cols_, 0.0);
  }
  return {values_.data() + it->second * cols_, cols_};
}

std::span<const double> RowGradients::find(std::uint32_t id) const {
  auto it = slots_.find(id);
  if (it == slots_.end()) return {};
  return {values_.data() + it->second * cols_, cols_};
}

void RowGradients::clear() {
  ids_.clear();
  values_.clear();
  slots_.clear();
}

void RowGradients::add(const RowGradients& other, double scale) {
  if (cols_ == 0) cols_ = other.cols_;
  for (std::size_t s = 0; s < other.size(); ++s) {
    auto dst = row(other.id(s));
    auto src = other.values(s);
    for (std::size_t k = 0; k < cols_; ++k) dst[k] += scale * src[k];
  }
}

namespace {

// d f / d theta for a TransE triple, scaled by `coef`, accumulated into g.
void transe_accumulate(const ModelState& m, const Triple& t, double coef, Gradients& g) {
  const double* h = m.entity_emb.row(t.head).data();
  const double* r = m.relation_emb.row(t.relation).data();
  const double* v = m.entity_emb.row(t.tail).data();
  std::vector<double> s(m.dim);
  for (std::size_t k = 0; k < m.dim; ++k) s[k] = coef * sign(h[k] + r[k] - v[k]);
  {
    auto gh = g.entity.row(t.head);
    for (std::size_t k = 0; k < m.dim; ++k) gh[k] += s[k];
  }
  {
    auto gt = g.entity.row(t.tail);
    for (std::size_t k = 0; k < m.dim; ++k) gt[k] -= s[k];
  }
  auto gr = g.relation.row(t.relation);
  for (std::size_t k = 0; k < m.dim; ++k) gr[k] += s[k];
}

void analogy_accumulate(const ModelState& m, const Triple& t, double coef, Gradients& g) {
  const double* h = m.entity_emb.row(t.head).data();
  const double* w = m.relation_emb.row(t.relation).data();
  const double* v = m.entity_emb.row(t.tail).data();
  std::vector<double> dh(m.dim), dw(m.dim), dv(m.dim);
  for (std::size_t k = 0; k + 1 < m.dim; k += 2) {
    const double a = w[k], b = w[k + 1];
    const double x0 = h[k], x1 = h[k + 1];
    const double t0 = v[k], t1 = v[k + 1];
    dw[k] = x0 * t0 + x1 * t1;
    dw[k + 1] = -x1 * t0 + x0 * t1;
    dh[k] = a * t0 + b * t1;
    dh[k + 1] = -b * t0 + a * t1;
    dv[k] = x0 * a - x1 * b;
    dv[k + 1] = x0 * b + x1 * a;
  }
  {
    auto gh = g.entity.row(t.head);
    for (std::size_t k = 0; k < m.dim; ++k) gh[k] += coef * dh[k];
  }
  {
    auto gt = g.entity.row(t.tail);
    for (std::size_t k = 0; k < m.dim; ++k) gt[k] += coef * dv[k];
  }
  auto gr = g.relation.row(t.relation);
  for (std::size_t k = 0; k < m.dim; ++k) gr[k] += coef * dw[k];
}

// log(1 + exp(x)) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

LossResult transe_loss_grad(const ModelState& model, const TrainBatch& batch, double margin) {
  if (margin < 0.0) throw std::invalid_argument("margin must be non-negative");
  if (model.kind != ModelKind::TransE) throw std::invalid_argument("TransE loss on a non-TransE model");
  const std::size_t ratio = std::max<std::size_t>(batch.ratio, 1);
  if (batch.negatives.size() != batch.positives.size() * ratio) {
    throw std::invalid_argument("negatives must be paired with positives");
  }
  LossResult out{0.0, Gradients(model.dim)};
  for (std::size_t i = 0; i < batch.negatives.size(); ++i) {
    const Triple& pos = batch.positives[i / ratio];
    const Triple& neg = batch.negatives[i];
    const double term = transe_score(model, pos) + margin - transe_score(model, neg);
    if (term >= 0.0) {
      out.loss += term;
      transe_accumulate(model, pos, 1.0, out.grads);
      transe_accumulate(model, neg, -1.0, out.grads);
    }
  }
  return out;
}

LossResult analogy_loss_grad(const ModelState& model, std::span<const LabeledTriple> rows) {
  if (model.kind != ModelKind::Analogy) {
    throw std::invalid_argument("Analogy loss on a non-Analogy model");
  }
  LossResult out{0.0, Gradients(model.dim)};
  for (const auto& row : rows) {
    const double y = row.label >= 0 ? 1.0 : -1.0;
    const double f = analogy_score(model, row.triple);
    out.loss += softplus(-y * f);
    // d/df softplus(-y f) = -y sigmoid(-y f)
    analogy_accumulate(model, row.triple, -y * sigmoid(-y * f), out.grads);
  }
  return out;
}

LossResult analogy_loss_grad(const ModelState& model, const TrainBatch& batch) {
  std::vector<LabeledTriple> rows;
  rows.reserve(batch.positives.size() + batch.negatives.size());
  for (const auto& t : batch.positives) rows.push_back({t, 1});
  for (const auto& t : batch.negatives) rows.push_back({t, -1});
  return analogy_loss_grad(model, rows);
}

NegativeSamples corrupt_negatives(std::span<const Triple> positives,
                                  std::span<const EntityId> candidates, std::size_t ratio,
                                  Rng& rng, const TripleSet* known_positives,
                                  std::size_t max_retries) {
  if (ratio < 1) throw std::invalid_argument("negative ratio must be at least 1");
  if (candidates.size() < 2) {
    throw std::invalid_argument("corrupting a triple needs at least two candidate entities");
  }
  NegativeSamples out;
  out.negatives.reserve(positives.size() * ratio);
  for (const auto& pos : positives) {
    for (std::size_t k = 0; k < ratio; ++k) {
      Triple neg = pos;
      bool clean = false;
      for (std::size_t attempt = 0; attempt <= max_retries; ++attempt) {
        neg = pos;
        const bool replace_head = rng.coin();
        EntityId& slot = replace_head ? neg.head : neg.tail;
        const EntityId original = slot;
        EntityId e = original;
        while (e == original) e = candidates[rng.below(candidates.size())];
        slot = e;
        if (known_positives == nullptr || !known_positives->contains(neg)) {
          clean = true;
          break;
        }
      }
      if (!clean) ++out.fallbacks;
      out.negatives.push_back(neg);
    }
  }
  return out;
}

void project_constraints(ModelState& model, const FreezeMask* mask) {
  if (model.kind != ModelKind::TransE) return;
  for (Eigen::Index i = 0; i < model.entity_emb.rows(); ++i) {
    if (mask && mask->entity_frozen(static_cast<std::uint32_t>(i))) continue;
    project_row(model.entity_emb.row(i).data(), model.dim);
  }
  for (Eigen::Index i = 0; i < model.relation_emb.rows(); ++i) {
    if (mask && mask->relation_frozen(static_cast<std::uint32_t>(i))) continue;
    project_row(model.relation_emb.row(i).data(), model.dim);
  }
}

namespace {

void apply_rows(Matrix& table, const RowGradients& grads, double lr, bool project,
                const std::function<bool(std::uint32_t)>& frozen, RowGradients* applied,
                const char* what) {
  const std::size_t d = static_cast<std::size_t>(table.cols());
  std::vector<double> before(d);
  for (std::size_t s = 0; s < grads.size(); ++s) {
    const auto id = grads.id(s);
    auto g = grads.values(s);
    for (std::size_t k = 0; k < d; ++k) {
      if (!std::isfinite(g[k])) {
        std::ostringstream os;
        os << "non-finite gradient on " << what << " row " << id << " component " << k;
        throw NumericalError(os.str());
      }
    }
    if (frozen(id)) continue;
    if (static_cast<Eigen::Index>(id) >= table.rows()) {
      throw std::out_of_range(std::string("gradient for missing ") + what + " row");
    }
    double* row = table.row(id).data();
    std::copy(row, row + d, before.begin());
    for (std::size_t k = 0; k < d; ++k) row[k] -= lr * g[k];
    if (project) project_row(row, d);
    if (applied != nullptr) {
      auto out = applied->row(id);
      for (std::size_t k = 0; k < d; ++k) out[k] += row[k] - before[k];
    }
  }
}

}  // namespace

void sgd_step(ModelState& model, const Gradients& grads, double lr, const FreezeMask* mask,
              Gradients* applied) {
  if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
  const bool project = model.kind == ModelKind::TransE;
  if (applied != nullptr && applied->entity.cols() == 0) *applied = Gradients(model.dim);
  apply_rows(model.entity_emb, grads.entity, lr, project,
             [&](std::uint32_t id) { return mask != nullptr && mask->entity_frozen(id); },
             applied ? &applied->entity : nullptr, "entity");
  apply_rows(model.relation_emb, grads.relation, lr, project,
             [&](std::uint32_t id) { return mask != nullptr && mask->relation_frozen(id); },
             applied ? &applied->relation : nullptr, "relation");
}

Checkpoint model_checkpoint(const ModelState& model) {
  Checkpoint ckpt;
  ckpt.set("kind", std::string(to_string(model.kind)));
  ckpt.set("dim", std::to_string(model.dim));
  ckpt.set("entities", std::to_string(model.num_entities()));
  ckpt.set("relations", std::to_string(model.num_relations()));
  ckpt.add_tensor("entity_emb", model.entity_emb);
  ckpt.add_tensor("relation_emb", model.relation_emb);
  return ckpt;
}

ModelState model_from_checkpoint(const Checkpoint& ckpt) {
  ModelState m;
  m.kind = parse_model_kind(ckpt.get("kind"));
  m.dim = ckpt.get_size("dim");
  m.entity_emb = ckpt.tensor("entity_emb");
  m.relation_emb = ckpt.tensor("relation_emb");
  if (static_cast<std::size_t>(m.entity_emb.cols()) != m.dim ||
      static_cast<std::size_t>(m.relation_emb.cols()) != m.dim ||
      m.num_entities() != ckpt.get_size("entities") ||
      m.num_relations() != ckpt.get_size("relations")) {
    throw DataError("model checkpoint header does not match its tensors");
  }
  return m;
}

}  // namespace ckge
