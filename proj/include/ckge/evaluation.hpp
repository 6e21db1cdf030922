#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ckge/kg_data.hpp"
#include "ckge/matrix.hpp"
#include "ckge/model.hpp"
#include "ckge/sampler.hpp"

namespace ckge {

// How a corruption whose goodness equals the true triple's is counted.
// Optimistic: rank = 1 + #strictly better. Pessimistic: 1 + #better-or-equal.
// Mean: the average of the two.
enum class TiePolicy { Optimistic, Pessimistic, Mean };

TiePolicy parse_tie_policy(std::string_view text);
std::string_view to_string(TiePolicy policy);

struct RankPair {
  double head = 1.0;
  double tail = 1.0;
};

// Filtered ranks of the true head and tail among `candidates`. Corruptions
// present in `filter` do not compete.
RankPair filtered_rank(const ModelState& model, const Triple& triple,
                       std::span<const EntityId> candidates, const TripleSet& filter,
                       TiePolicy ties = TiePolicy::Optimistic);

struct SplitMetrics {
  double mrr = 0.0;
  double hits10 = 0.0;
};

SplitMetrics metrics_from_ranks(std::span<const double> ranks);

// Averages over both head and tail ranks of every triple.
SplitMetrics eval_split(const ModelState& model, std::span<const Triple> triples,
                        std::span<const EntityId> candidates, const TripleSet& filter,
                        TiePolicy ties = TiePolicy::Optimistic);

// ---- continual-learning measures over an N x N matrix, M(i, j) = score on
// the test set of session j after training session i ----

double acc(const Matrix& m);
// Absent for N = 1.
std::optional<double> fwt(const Matrix& m);
std::optional<double> bwt(const Matrix& m);
std::optional<double> plus_bwt(const Matrix& m);
std::optional<double> rem(const Matrix& m);

// Model-size score from per-session parameter byte counts.
double ms(std::span<const double> model_bytes);
// Samples-storage score from per-session stored bytes and |train| bytes.
double sss(std::span<const double> stored_bytes, double total_train_bytes);

// Learning-curve area of a measure sampled once per epoch: the mean of the
// curve up to (and including) the first epoch that attains its maximum m*,
// divided by m*. An all-zero curve scores 0.
double lca(std::span<const double> curve);

struct TraceEntry {
  std::size_t epoch = 0;        // 1-based within the session
  bool generator = false;       // epoch spent training the replay generator
  double hits10 = 0.0;          // validation measure after this epoch
  double mrr = 0.0;
  double loss = 0.0;
};

using TrainTrace = std::vector<TraceEntry>;

enum class TraceMeasure { Hits10, Mrr };

double lca(std::span<const TraceEntry> trace, bool include_generator_epochs,
           TraceMeasure measure = TraceMeasure::Hits10);

// Known-positive filter for session n: training triples of sessions 0..n
// plus that session's validation and test triples.
std::vector<TripleSet> session_filters(const std::vector<SessionDataset>& sessions);

struct MetricMatrices {
  Matrix mrr;
  Matrix hits10;
};

// Fills both N x N matrices from the per-session models (model i is the
// state after training session i). Test set j is ranked against the
// entities observed by session max(i, j); for j > i the model is first
// expanded with rows drawn from Rng::derive(zero_shot_seed, "zero-shot", j).
MetricMatrices build_matrices(const std::vector<ModelState>& session_models,
                              const std::vector<SessionDataset>& sessions,
                              const std::vector<TripleSet>& filters,
                              std::uint64_t zero_shot_seed, TiePolicy ties = TiePolicy::Optimistic);

// One row of build_matrices: scores of a single session model on every
// session's test set.
void fill_matrix_row(const ModelState& model, std::size_t row,
                     const std::vector<SessionDataset>& sessions,
                     const std::vector<TripleSet>& filters, std::uint64_t zero_shot_seed,
                     TiePolicy ties, MetricMatrices& out);

}  // namespace ckge
