#include "ckge/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ckge/errors.hpp"

namespace ckge {

TiePolicy parse_tie_policy(std::string_view text) {
  if (text == "optimistic") return TiePolicy::Optimistic;
  if (text == "pessimistic") return TiePolicy::Pessimistic;
  if (text == "mean") return TiePolicy::Mean;
  throw ConfigError("unknown tie policy '" + std::string(text) + "'");
}

std::string_view to_string(TiePolicy policy) {
  switch (policy) {
    case TiePolicy::Optimistic: return "optimistic";
    case TiePolicy::Pessimistic: return "pessimistic";
    case TiePolicy::Mean: return "mean";
  }
  return "optimistic";
}

namespace {

// Goodness without bounds checks; callers validate ids once per triple.
double fast_goodness(const ModelState& m, EntityId h, RelationId r, EntityId t) {
  const double* vh = m.entity_emb.row(h).data();
  const double* wr = m.relation_emb.row(r).data();
  const double* vt = m.entity_emb.row(t).data();
  double s = 0.0;
  if (m.kind == ModelKind::TransE) {
    for (std::size_t k = 0; k < m.dim; ++k) s += std::abs(vh[k] + wr[k] - vt[k]);
    return -s;
  }
  for (std::size_t k = 0; k + 1 < m.dim; k += 2) {
    const double a = wr[k], b = wr[k + 1];
    s += (vh[k] * a - vh[k + 1] * b) * vt[k] + (vh[k] * b + vh[k + 1] * a) * vt[k + 1];
  }
  return s;
}

double rank_from_counts(std::size_t better, std::size_t equal, TiePolicy ties) {
  switch (ties) {
    case TiePolicy::Optimistic: return 1.0 + static_cast<double>(better);
    case TiePolicy::Pessimistic: return 1.0 + static_cast<double>(better + equal);
    case TiePolicy::Mean: return 1.0 + static_cast<double>(better) + 0.5 * static_cast<double>(equal);
  }
  return 1.0 + static_cast<double>(better);
}

}  // namespace

RankPair filtered_rank(const ModelState& model, const Triple& triple,
                       std::span<const EntityId> candidates, const TripleSet& filter,
                       TiePolicy ties) {
  if (candidates.size() < 2) throw std::invalid_argument("ranking needs at least two candidates");
  const double truth = goodness(model, triple);  // validates ids
  for (auto c : candidates) {
    if (c >= model.num_entities()) throw std::out_of_range("candidate entity outside the model");
  }

  std::size_t better = 0, equal = 0;
  for (auto c : candidates) {
    if (c == triple.head) continue;
    if (filter.contains(Triple{c, triple.relation, triple.tail})) continue;
    const double g = fast_goodness(model, c, triple.relation, triple.tail);
    if (g > truth) ++better;
    else if (g == truth) ++equal;
  }
  RankPair out;
  out.head = rank_from_counts(better, equal, ties);

  better = equal = 0;
  for (auto c : candidates) {
    if (c == triple.tail) continue;
    if (filter.contains(Triple{triple.head, triple.relation, c})) continue;
    const double g = fast_goodness(model, triple.head, triple.relation, c);
    if (g > truth) ++better;
    else if (g == truth) ++equal;
  }
  out.tail = rank_from_counts(better, equal, ties);
  return out;
}

SplitMetrics metrics_from_ranks(std::span<const double> ranks) {
  if (ranks.empty()) throw std::invalid_argument("no ranks to summarize");
  double rr = 0.0, hits = 0.0;
  for (double r : ranks) {
    rr += 1.0 / r;
    if (r <= 10.0) hits += 1.0;
  }
  const auto n = static_cast<double>(ranks.size());
  return {rr / n, hits / n};
}

SplitMetrics eval_split(const ModelState& model, std::span<const Triple> triples,
                        std::span<const EntityId> candidates, const TripleSet& filter,
                        TiePolicy ties) {
  if (triples.empty()) throw std::invalid_argument("cannot evaluate an empty split");
  std::vector<double> ranks;
  ranks.reserve(triples.size() * 2);
  for (const auto& t : triples) {
    const auto r = filtered_rank(model, t, candidates, filter, ties);
    ranks.push_back(r.head);
    ranks.push_back(r.tail);
  }
  return metrics_from_ranks(ranks);
}

namespace {

std::size_t square_size(const Matrix& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("performance matrix must be square");
  if (m.rows() == 0) throw std::invalid_argument("performance matrix is empty");
  return static_cast<std::size_t>(m.rows());
}

}  // namespace

double acc(const Matrix& m) {
  const auto n = square_size(m);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) sum += m(i, j);
  return sum / (static_cast<double>(n * (n + 1)) / 2.0);
}

std::optional<double> fwt(const Matrix& m) {
  const auto n = square_size(m);
  if (n < 2) return std::nullopt;
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) sum += m(i, j);
  return sum / (static_cast<double>(n * (n - 1)) / 2.0);
}

std::optional<double> bwt(const Matrix& m) {
  const auto n = square_size(m);
  if (n < 2) return std::nullopt;
  double sum = 0.0;
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) sum += m(i, j) - m(j, j);
  return sum / (static_cast<double>(n * (n - 1)) / 2.0);
}

std::optional<double> plus_bwt(const Matrix& m) {
  const auto b = bwt(m);
  if (!b) return std::nullopt;
  return std::max(0.0, *b);
}

std::optional<double> rem(const Matrix& m) {
  const auto b = bwt(m);
  if (!b) return std::nullopt;
  return 1.0 - std::abs(std::min(0.0, *b));
}

double ms(std::span<const double> model_bytes) {
  if (model_bytes.empty()) throw std::invalid_argument("no model sizes");
  double sum = 0.0;
  for (double u : model_bytes) {
    if (!(u > 0.0)) throw std::invalid_argument("model size must be positive");
    sum += model_bytes.front() / u;
  }
  return std::min(1.0, sum / static_cast<double>(model_bytes.size()));
}

double sss(std::span<const double> stored_bytes, double total_train_bytes) {
  if (stored_bytes.empty()) throw std::invalid_argument("no storage sizes");
  if (!(total_train_bytes > 0.0)) throw std::invalid_argument("training set size must be positive");
  double sum = 0.0;
  for (double u : stored_bytes) sum += u / total_train_bytes;
  return 1.0 - std::min(1.0, sum / static_cast<double>(stored_bytes.size()));
}

double lca(std::span<const double> curve) {
  if (curve.empty()) throw std::invalid_argument("empty learning curve");
  std::size_t best = 0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i] > curve[best]) best = i;
  const double peak = curve[best];
  if (!(peak > 0.0)) return 0.0;
  double area = 0.0;
  for (std::size_t i = 0; i <= best; ++i) area += curve[i];
  return area / (peak * static_cast<double>(best + 1));
}

double lca(std::span<const TraceEntry> trace, bool include_generator_epochs, TraceMeasure measure) {
  std::vector<double> curve;
  curve.reserve(trace.size());
  for (const auto& e : trace) {
    if (e.generator && !include_generator_epochs) continue;
    curve.push_back(measure == TraceMeasure::Hits10 ? e.hits10 : e.mrr);
  }
  return lca(curve);
}

std::vector<TripleSet> session_filters(const std::vector<SessionDataset>& sessions) {
  std::vector<TripleSet> filters;
  TripleSet seen_train;
  for (const auto& s : sessions) {
    seen_train.insert(s.train.begin(), s.train.end());
    TripleSet f = seen_train;
    f.insert(s.valid.begin(), s.valid.end());
    f.insert(s.test.begin(), s.test.end());
    filters.push_back(std::move(f));
  }
  return filters;
}

void fill_matrix_row(const ModelState& model, std::size_t row,
                     const std::vector<SessionDataset>& sessions,
                     const std::vector<TripleSet>& filters, std::uint64_t zero_shot_seed,
                     TiePolicy ties, MetricMatrices& out) {
  const std::size_t n = sessions.size();
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t scope = std::max(row, j);
    const auto& candidates = sessions[scope].observed_entities;
    const auto& test = sessions[j].test;
    if (test.empty()) {
      throw DataError("session " + std::to_string(j) + " has an empty test set");
    }
    SplitMetrics metrics;
    const EntityId max_entity = candidates.empty() ? 0 : candidates.back();
    RelationId max_relation = 0;
    for (auto r : sessions[scope].observed_relations) max_relation = std::max(max_relation, r);
    if (max_entity < model.num_entities() && max_relation < model.num_relations()) {
      metrics = eval_split(model, test, candidates, filters[scope], ties);
    } else {
      ModelState expanded = model;
      Rng rng = Rng::derive(zero_shot_seed, "zero-shot", j);
      expand_model(expanded, std::max<std::size_t>(model.num_entities(), max_entity + 1),
                   std::max<std::size_t>(model.num_relations(), max_relation + 1), rng);
      metrics = eval_split(expanded, test, candidates, filters[scope], ties);
    }
    out.mrr(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = metrics.mrr;
    out.hits10(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(j)) = metrics.hits10;
  }
}

MetricMatrices build_matrices(const std::vector<ModelState>& session_models,
                              const std::vector<SessionDataset>& sessions,
                              const std::vector<TripleSet>& filters,
                              std::uint64_t zero_shot_seed, TiePolicy ties) {
  const auto n = static_cast<Eigen::Index>(sessions.size());
  if (session_models.size() != sessions.size()) {
    throw DataError("expected one model per session, got " + std::to_string(session_models.size()));
  }
  MetricMatrices out{Matrix::Zero(n, n), Matrix::Zero(n, n)};
  for (std::size_t i = 0; i < session_models.size(); ++i) {
    fill_matrix_row(session_models[i], i, sessions, filters, zero_shot_seed, ties, out);
  }
  return out;
}

}  // namespace ckge
