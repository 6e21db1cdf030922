#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "ckge/checkpoint.hpp"
#include "ckge/kg_data.hpp"
#include "ckge/matrix.hpp"
#include "ckge/rng.hpp"

namespace ckge {

enum class ModelKind { TransE, Analogy };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

// Embedding tables. For Analogy each relation row stores dim/2 pairs (a, b);
// pair k is the 2x2 block [[a, b], [-b, a]] of W_r acting on row vectors,
// i.e. a counter-clockwise rotation scaled by sqrt(a^2 + b^2). Block-diagonal
// matrices of that form are normal and commute with each other.
struct ModelState {
  ModelKind kind = ModelKind::TransE;
  std::size_t dim = 0;
  Matrix entity_emb;
  Matrix relation_emb;

  std::size_t num_entities() const { return static_cast<std::size_t>(entity_emb.rows()); }
  std::size_t num_relations() const { return static_cast<std::size_t>(relation_emb.rows()); }
  std::size_t parameter_count() const {
    return static_cast<std::size_t>(entity_emb.size() + relation_emb.size());
  }
};

// Entries uniform in [-6/sqrt(dim), 6/sqrt(dim)], then projected (TransE).
ModelState init_model(ModelKind kind, std::size_t num_entities, std::size_t num_relations,
                      std::size_t dim, Rng& rng);

// Grows the tables to the given counts. Existing rows are untouched; new rows
// are drawn exactly as init_model draws them.
void expand_model(ModelState& model, std::size_t num_entities, std::size_t num_relations,
                  Rng& rng);

// Dense W_r (dim x dim) in the row-vector convention used by analogy_score.
Matrix relation_matrix(const ModelState& model, RelationId r);

// ||v_h + W_r - v_t||_1; lower is better.
double transe_score(const ModelState& model, const Triple& t);
// <v_h^T W_r, v_t>; higher is better.
double analogy_score(const ModelState& model, const Triple& t);
// Raw score of the model's own scoring function.
double score(const ModelState& model, const Triple& t);
// Higher-is-better view used by ranking: -f for TransE, f for Analogy.
double goodness(const ModelState& model, const Triple& t);

// Row-sparse accumulator. Rows appear in first-touch order, which keeps
// every loop over a gradient deterministic.
class RowGradients {
 public:
  RowGradients() = default;
  explicit RowGradients(std::size_t cols) : cols_(cols) {}

  // Accumulator for `row`, created zeroed on first use. The span is only
  // valid until the next call that creates a row.
  std::span<double> row(std::uint32_t id);
  std::span<const double> find(std::uint32_t id) const;

  std::size_t size() const { return ids_.size(); }
  std::size_t cols() const { return cols_; }
  std::uint32_t id(std::size_t slot) const { return ids_[slot]; }
  std::span<const double> values(std::size_t slot) const {
    return {values_.data() + slot * cols_, cols_};
  }
  std::span<double> values(std::size_t slot) { return {values_.data() + slot * cols_, cols_}; }
  bool empty() const { return ids_.empty(); }
  void clear();
  // Adds `scale * other` into this accumulator.
  void add(const RowGradients& other, double scale = 1.0);

 private:
  std::size_t cols_ = 0;
  std::vector<std::uint32_t> ids_;
  std::vector<double> values_;
  std::unordered_map<std::uint32_t, std::size_t> slots_;
};

struct Gradients {
  RowGradients entity;
  RowGradients relation;

  Gradients() = default;
  explicit Gradients(std::size_t dim) : entity(dim), relation(dim) {}
  void add(const Gradients& other, double scale = 1.0) {
    entity.add(other.entity, scale);
    relation.add(other.relation, scale);
  }
};

struct LossResult {
  double loss = 0.0;
  Gradients grads;
};

// Corrupted triples paired with positives: negatives[i] belongs to
// positives[i / ratio]. Positives carry label +1 and negatives -1.
struct TrainBatch {
  TripleList positives;
  TripleList negatives;
  std::size_t ratio = 1;
};

struct LabeledTriple {
  Triple triple;
  int label = 1;  // +1 or -1
};

// Sum over pairs of [f(pos) + margin - f(neg)]_+. The L1 subgradient at 0 is
// 0 and a hinge exactly at its boundary counts as active.
LossResult transe_loss_grad(const ModelState& model, const TrainBatch& batch, double margin);

// Sum of softplus(-y f), i.e. -log sigmoid(y f).
LossResult analogy_loss_grad(const ModelState& model, std::span<const LabeledTriple> rows);
LossResult analogy_loss_grad(const ModelState& model, const TrainBatch& batch);

struct NegativeSamples {
  TripleList negatives;
  // Corruptions emitted even though every retry hit a known positive.
  std::size_t fallbacks = 0;
};

// `ratio` corruptions per positive: head or tail chosen by a fair coin and
// replaced by a different entity drawn uniformly from `candidates`.
NegativeSamples corrupt_negatives(std::span<const Triple> positives,
                                  std::span<const EntityId> candidates, std::size_t ratio,
                                  Rng& rng, const TripleSet* known_positives,
                                  std::size_t max_retries = 16);

// Per-row freeze flags; rows beyond the mask size are trainable.
struct FreezeMask {
  std::vector<char> entity;
  std::vector<char> relation;

  static FreezeMask prefix(std::size_t entities, std::size_t relations) {
    return {std::vector<char>(entities, 1), std::vector<char>(relations, 1)};
  }
  bool entity_frozen(std::uint32_t id) const { return id < entity.size() && entity[id]; }
  bool relation_frozen(std::uint32_t id) const { return id < relation.size() && relation[id]; }
};

// Rescales rows whose L2 norm exceeds 1 onto the unit sphere (TransE only;
// a no-op for Analogy). Frozen rows are skipped.
void project_constraints(ModelState& model, const FreezeMask* mask = nullptr);

// theta <- theta - lr * grads on unfrozen rows, then projection of the rows
// that moved. Throws NumericalError on a non-finite gradient. When `applied`
// is non-null it receives theta_after - theta_before for every updated row.
void sgd_step(ModelState& model, const Gradients& grads, double lr,
              const FreezeMask* mask = nullptr, Gradients* applied = nullptr);

Checkpoint model_checkpoint(const ModelState& model);
ModelState model_from_checkpoint(const Checkpoint& ckpt);

}  // namespace ckge
