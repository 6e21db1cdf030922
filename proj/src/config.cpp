#include "ckge/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "ckge/errors.hpp"

namespace ckge {

std::string_view to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::Unconstrained: return "unconstrained";
    case Scenario::DataConstrained: return "data_constrained";
    case Scenario::TimeDataConstrained: return "time_data_constrained";
  }
  return "unconstrained";
}

Scenario parse_scenario(std::string_view text) {
  if (text == "unconstrained") return Scenario::Unconstrained;
  if (text == "data_constrained") return Scenario::DataConstrained;
  if (text == "time_data_constrained") return Scenario::TimeDataConstrained;
  throw ConfigError("unknown scenario '" + std::string(text) +
                    "' (expected unconstrained, data_constrained or time_data_constrained)");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::string item;
  std::stringstream ss{std::string(text)};
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view text) {
  std::uint64_t v = 0;
  const auto t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
    throw ConfigError("'" + std::string(key) + "' expects a non-negative integer, got '" + std::string(text) + "'");
  }
  return v;
}

double to_double(std::string_view key, std::string_view text) {
  double v = 0.0;
  const auto t = trim(text);
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || ec != std::errc{} || ptr != t.data() + t.size()) {
    throw ConfigError("'" + std::string(key) + "' expects a number, got '" + std::string(text) + "'");
  }
  return v;
}

bool to_bool(std::string_view key, std::string_view text) {
  const auto t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw ConfigError("'" + std::string(key) + "' expects true or false, got '" + std::string(text) + "'");
}

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

struct Field {
  const char* key;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define CKGE_SIZE(name)                                                                             \
  Field {                                                                                           \
    #name, [](RunConfig& c, std::string_view v) { c.name = static_cast<std::size_t>(to_u64(#name, v)); }, \
        [](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(c.name)); }                  \
  }
#define CKGE_REAL(name)                                                               \
  Field {                                                                             \
    #name, [](RunConfig& c, std::string_view v) { c.name = to_double(#name, v); },    \
        [](const RunConfig& c) { return fmt(c.name); }                                \
  }
#define CKGE_FLAG(name)                                                             \
  Field {                                                                           \
    #name, [](RunConfig& c, std::string_view v) { c.name = to_bool(#name, v); },    \
        [](const RunConfig& c) { return fmt(c.name); }                              \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"dataset", [](RunConfig& c, std::string_view v) { c.dataset = trim(v); },
            [](const RunConfig& c) { return c.dataset; }},
      Field{"out", [](RunConfig& c, std::string_view v) { c.out = trim(v); },
            [](const RunConfig& c) { return c.out; }},
      Field{"run_id", [](RunConfig& c, std::string_view v) { c.run_id = trim(v); },
            [](const RunConfig& c) { return c.run_id; }},
      CKGE_SIZE(sessions),
      Field{"sample_seed", [](RunConfig& c, std::string_view v) { c.sample_seed = to_u64("sample_seed", v); },
            [](const RunConfig& c) { return fmt(c.sample_seed); }},
      Field{"seeds",
            [](RunConfig& c, std::string_view v) {
              c.seeds.clear();
              for (const auto& s : split_list(v)) c.seeds.push_back(to_u64("seeds", s));
            },
            [](const RunConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.seeds.size(); ++i) out += (i ? "," : "") + fmt(c.seeds[i]);
              return out;
            }},
      Field{"methods",
            [](RunConfig& c, std::string_view v) {
              c.methods.clear();
              for (const auto& s : split_list(v)) {
                if (s == "all") {
                  c.methods = all_methods();
                  break;
                }
                c.methods.push_back(parse_method(s));
              }
            },
            [](const RunConfig& c) {
              std::string out;
              for (std::size_t i = 0; i < c.methods.size(); ++i) out += (i ? "," : "") + std::string(to_string(c.methods[i]));
              return out;
            }},
      Field{"model",
            [](RunConfig& c, std::string_view v) {
              auto t = trim(v);
              std::transform(t.begin(), t.end(), t.begin(), [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
              c.model = parse_model_kind(t);
            },
            [](const RunConfig& c) { return std::string(to_string(c.model)); }},
      Field{"scenario", [](RunConfig& c, std::string_view v) { c.scenario = parse_scenario(trim(v)); },
            [](const RunConfig& c) { return std::string(to_string(c.scenario)); }},
      CKGE_SIZE(epochs),
      CKGE_SIZE(dim),
      CKGE_REAL(lr),
      CKGE_REAL(margin),
      CKGE_SIZE(negative_ratio),
      CKGE_SIZE(batch_size),
      CKGE_SIZE(eval_every),
      CKGE_SIZE(patience),
      CKGE_SIZE(trace_max_triples),
      Field{"ties", [](RunConfig& c, std::string_view v) { c.ties = parse_tie_policy(trim(v)); },
            [](const RunConfig& c) { return std::string(to_string(c.ties)); }},
      CKGE_REAL(l2r_lambda),
      CKGE_REAL(si_lambda),
      CKGE_REAL(si_xi),
      CKGE_FLAG(si_squared_importance),
      CKGE_SIZE(gen_token_dim),
      CKGE_SIZE(gen_latent_dim),
      CKGE_SIZE(gen_hidden_dim),
      CKGE_SIZE(gen_epochs),
      CKGE_SIZE(gen_batch_size),
      CKGE_REAL(gen_lr),
      CKGE_REAL(gen_momentum),
      CKGE_REAL(gen_clip_norm),
      CKGE_REAL(anneal_max),
      CKGE_REAL(anneal_slope),
      CKGE_REAL(anneal_position),
      CKGE_FLAG(gen_sample_greedy),
  };
  return table;
}

#undef CKGE_SIZE
#undef CKGE_REAL
#undef CKGE_FLAG

}  // namespace

void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value) {
  const auto k = trim(key);
  for (const auto& f : fields()) {
    if (k == f.key) {
      f.set(cfg, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + k + "'");
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(file.string() + ":" + std::to_string(number) + ": expected key = value");
    }
    try {
      apply_setting(cfg, line.substr(0, eq), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(file.string() + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& f : fields()) out.emplace_back(f.key, f.get(cfg));
  return out;
}

std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : config_entries(cfg)) out += k + " = " + v + "\n";
  return out;
}

ScenarioNotice resolve_config(RunConfig& cfg, std::size_t num_entities) {
  ScenarioNotice notice;
  const bool small = num_entities < kBenchmarkScaleEntities;
  if (cfg.dim == 0) {
    cfg.dim = small ? 25 : 100;
    if (cfg.model == ModelKind::Analogy && cfg.dim % 2 != 0) ++cfg.dim;
  }
  if (cfg.lr == 0.0) cfg.lr = cfg.model == ModelKind::TransE ? 0.01 : 0.1;
  if (cfg.batch_size == 0) cfg.batch_size = small ? 128 : 512;

  if (cfg.scenario == Scenario::TimeDataConstrained) {
    cfg.epochs = std::min(cfg.epochs, kTimeConstrainedEpochs);
    cfg.gen_epochs = std::min(cfg.gen_epochs, kTimeConstrainedEpochs);
  }
  if (cfg.scenario != Scenario::Unconstrained &&
      std::find(cfg.methods.begin(), cfg.methods.end(), Method::Batch) != cfg.methods.end()) {
    notice.warnings.push_back("scenario " + std::string(to_string(cfg.scenario)) +
                              " forbids retaining samples: batch runs as finetune");
  }

  if (cfg.model == ModelKind::Analogy && cfg.dim % 2 != 0) {
    throw ConfigError("Analogy needs an even dim, got " + std::to_string(cfg.dim));
  }
  if (cfg.sessions == 0) throw ConfigError("sessions must be at least 1");
  if (cfg.seeds.empty()) throw ConfigError("at least one seed is required");
  if (cfg.methods.empty()) throw ConfigError("at least one method is required");
  if (cfg.epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(cfg.lr > 0.0)) throw ConfigError("lr must be positive");
  if (cfg.margin < 0.0) throw ConfigError("margin must be non-negative");
  if (cfg.negative_ratio == 0) throw ConfigError("negative_ratio must be at least 1");
  if (cfg.l2r_lambda < 0.0 || cfg.si_lambda < 0.0) throw ConfigError("lambda values must be non-negative");
  if (!(cfg.si_xi > 0.0)) throw ConfigError("si_xi must be positive");
  if (!(cfg.anneal_slope > 0.0)) throw ConfigError("anneal_slope must be positive");
  if (cfg.gen_epochs == 0 || cfg.gen_batch_size == 0) throw ConfigError("generator epochs and batch size must be positive");
  if (cfg.gen_token_dim == 0 || cfg.gen_latent_dim == 0 || cfg.gen_hidden_dim == 0) {
    throw ConfigError("generator dimensions must be positive");
  }
  if (!(cfg.gen_lr > 0.0)) throw ConfigError("gen_lr must be positive");
  if (cfg.out.empty() || cfg.run_id.empty()) throw ConfigError("out and run_id must be non-empty");
  return notice;
}

MethodConfig method_config(const RunConfig& cfg) {
  MethodConfig m;
  m.kind = cfg.model;
  m.dim = cfg.dim;
  m.solver.lr = cfg.lr;
  m.solver.margin = cfg.margin;
  m.solver.negative_ratio = cfg.negative_ratio;
  m.solver.batch_size = cfg.batch_size;
  m.solver.max_epochs = cfg.epochs;
  m.solver.eval_every = cfg.eval_every;
  m.solver.patience = cfg.patience;
  m.solver.ties = cfg.ties;
  m.solver.trace_max_triples = cfg.trace_max_triples;
  m.l2r_lambda = cfg.l2r_lambda;
  m.si_lambda = cfg.si_lambda;
  m.si_xi = cfg.si_xi;
  m.si_squared_importance = cfg.si_squared_importance;
  m.retain_samples = cfg.scenario == Scenario::Unconstrained;
  m.generator.token_dim = cfg.gen_token_dim;
  m.generator.latent_dim = cfg.gen_latent_dim;
  m.generator.hidden_dim = cfg.gen_hidden_dim;
  m.generator.epochs = cfg.gen_epochs;
  m.generator.batch_size = cfg.gen_batch_size;
  m.generator.lr = cfg.gen_lr;
  m.generator.momentum = cfg.gen_momentum;
  m.generator.clip_norm = cfg.gen_clip_norm;
  m.generator.anneal_max = cfg.anneal_max;
  m.generator.anneal_slope = cfg.anneal_slope;
  m.generator.anneal_position = cfg.anneal_position;
  m.generator.sample_greedy = cfg.gen_sample_greedy;
  return m;
}

}  // namespace ckge
