#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ckge/evaluation.hpp"
#include "ckge/methods.hpp"
#include "ckge/model.hpp"

namespace ckge {

enum class Scenario { Unconstrained, DataConstrained, TimeDataConstrained };

std::string_view to_string(Scenario scenario);
Scenario parse_scenario(std::string_view text);

constexpr std::size_t kTimeConstrainedEpochs = 100;

// Every tunable of a run. Zero-valued `dim`, `lr` and `batch_size` are
// resolved from the model kind and graph size by resolve_config().
struct RunConfig {
  std::string dataset;
  std::string out = "runs";
  std::string run_id = "run";
  std::size_t sessions = 5;
  std::uint64_t sample_seed = 0;
  std::vector<std::uint64_t> seeds = {0};
  std::vector<Method> methods = all_methods();
  ModelKind model = ModelKind::TransE;
  Scenario scenario = Scenario::Unconstrained;

  std::size_t epochs = 500;
  std::size_t dim = 0;
  double lr = 0.0;
  double margin = 1.0;
  std::size_t negative_ratio = 1;
  std::size_t batch_size = 0;
  std::size_t eval_every = 10;
  std::size_t patience = 3;
  std::size_t trace_max_triples = 0;
  TiePolicy ties = TiePolicy::Optimistic;

  double l2r_lambda = 1e-2;
  double si_lambda = 1.0;
  double si_xi = 1e-3;
  bool si_squared_importance = false;

  std::size_t gen_token_dim = 64;
  std::size_t gen_latent_dim = 32;
  std::size_t gen_hidden_dim = 64;
  std::size_t gen_epochs = 500;
  std::size_t gen_batch_size = 128;
  double gen_lr = 0.05;
  double gen_momentum = 0.9;
  double gen_clip_norm = 5.0;
  double anneal_max = 1.0;
  double anneal_slope = 0.05;
  double anneal_position = -1.0;  // < 0: gen_epochs / 4
  bool gen_sample_greedy = false;
};

// Graphs with fewer entities than this use the small-scale defaults.
constexpr std::size_t kBenchmarkScaleEntities = 5000;

// Applies key=value assignments; unknown keys and malformed values throw
// ConfigError.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value);
// Reads a config file: one `key = value` per line, `#` starts a comment.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& file);

// Every field as (key, value) in a fixed order; parsing the output with
// apply_setting reproduces the config.
std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg);
std::string format_config(const RunConfig& cfg);

struct ScenarioNotice {
  std::vector<std::string> warnings;
};

// Fills automatic values, applies the scenario rules and validates ranges.
ScenarioNotice resolve_config(RunConfig& cfg, std::size_t num_entities);

// Per-method settings derived from a resolved run config.
MethodConfig method_config(const RunConfig& cfg);

}  // namespace ckge
