#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "ckge/checkpoint.hpp"
#include "ckge/evaluation.hpp"
#include "ckge/generator.hpp"
#include "ckge/model.hpp"
#include "ckge/sampler.hpp"
#include "ckge/trainer.hpp"

namespace ckge {

enum class Method { Batch, Finetune, PNN, CWR, L2R, SI, DGR };

std::string_view to_string(Method method);
Method parse_method(std::string_view text);
const std::vector<Method>& all_methods();

struct PenaltyResult {
  double penalty = 0.0;
  Gradients grads;
};

// lambda * sum over rows present in `snapshot` of ||theta - theta_prev||^2.
// Rows added after the snapshot are not penalized.
PenaltyResult l2r_penalty(const ModelState& model, const ModelState& snapshot, double lambda);

// lambda * sum_k Omega_k (theta_k - prev_k)^2 over the snapshot rows, or
// Omega_k^2 when `squared_importance`.
PenaltyResult si_penalty(const ModelState& model, const ModelState& snapshot, const Matrix& omega_entity,
                         const Matrix& omega_relation, double lambda, bool squared_importance = false);

// Path-integral accumulators of synaptic intelligence, shaped like the model.
struct SiState {
  Matrix omega_entity;   // consolidated importance
  Matrix omega_relation;
  Matrix path_entity;    // running sum of -g * delta within a session
  Matrix path_relation;
};

// Grows every SI matrix to the model's row count with zero rows.
void si_resize(SiState& si, const ModelState& model);
// path += -grads * applied, row by row.
void si_accumulate(SiState& si, const Gradients& grads, const Gradients& applied);
// Omega += max(0, path) / ((end - start)^2 + xi); path <- 0. Rows absent from
// `start` count as starting where they end.
void si_consolidate(SiState& si, const ModelState& start, const ModelState& end, double xi);

// CWR: copies rows of ids new to `ce` and averages rows it already holds.
// `local_entities[k]` / `local_relations[k]` is the global id of TE row k.
void cwr_merge(ModelState& ce, const ModelState& te, std::span<const EntityId> local_entities,
               std::span<const RelationId> local_relations);

struct MethodConfig {
  ModelKind kind = ModelKind::TransE;
  std::size_t dim = 25;
  SolverConfig solver;
  double l2r_lambda = 1e-2;
  double si_lambda = 1.0;
  double si_xi = 1e-3;
  bool si_squared_importance = false;
  bool retain_samples = true;  // Batch only; false turns Batch into Finetune
  GeneratorConfig generator;
};

// Everything a strategy sees when it trains session `index`.
struct SessionContext {
  const std::vector<SessionDataset>* sessions = nullptr;
  const std::vector<TripleSet>* filters = nullptr;
  std::size_t index = 0;
  std::uint64_t seed = 0;
};

struct SessionOutcome {
  TrainTrace trace;
  double model_bytes = 0.0;   // U(theta_i): all parameters the method keeps
  double stored_bytes = 0.0;  // U(SS_i): training triples retained from earlier sessions
};

constexpr double kBytesPerParameter = 8.0;
constexpr double kBytesPerTriple = 12.0;

class Strategy {
 public:
  virtual ~Strategy() = default;
  virtual Method method() const = 0;

  // Trains session ctx.index. `model` holds the result of the previous
  // session (empty before session 0) and receives the evaluated model.
  SessionOutcome train_session(ModelState& model, const SessionContext& ctx);

  // Auxiliary state needed to continue with the next session.
  virtual Checkpoint save_state() const;
  virtual void load_state(const Checkpoint& ckpt, const ModelState& model);
  // Extra files next to method_state.ckpt (the DGR generator).
  virtual void save_extra(const std::filesystem::path& dir) const;
  virtual void load_extra(const std::filesystem::path& dir);

  const MethodConfig& config() const { return cfg_; }

 protected:
  explicit Strategy(MethodConfig cfg) : cfg_(std::move(cfg)) {}
  virtual SessionOutcome run(ModelState& model, const SessionContext& ctx) = 0;

  // Grows `model` to the entities and relations observed by the session.
  void expand_to_session(ModelState& model, const SessionContext& ctx) const;
  SolverData solver_data(const SessionContext& ctx, std::span<const Triple> train,
                         const TripleSet& known) const;
  Rng train_rng(const SessionContext& ctx) const;

  MethodConfig cfg_;
  std::size_t next_session_ = 0;
};

std::unique_ptr<Strategy> make_strategy(Method method, const MethodConfig& cfg);

}  // namespace ckge
