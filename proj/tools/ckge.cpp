// Command-line front end: generate, sample, train, report.

#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ckge/config.hpp"
#include "ckge/errors.hpp"
#include "ckge/experiment.hpp"
#include "ckge/platform.hpp"
#include "ckge/sampler.hpp"
#include "ckge/synthetic.hpp"

namespace fs = std::filesystem;

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kData = 2, kNumerical = 3 };

struct TrainFlags {
  std::string config_file;
  std::vector<std::string> settings;
  std::string dataset, methods, seeds, model, scenario, epochs, out, run_id;
};

int cmd_generate(const std::string& kind, std::uint64_t seed, const fs::path& out) {
  ckge::GraphSplits g;
  if (kind == "latent") g = ckge::make_latent_graph({}, seed);
  else if (kind == "sparse") g = ckge::make_sparse_graph({}, seed);
  else throw ckge::ConfigError("unknown graph kind '" + kind + "' (expected latent or sparse)");
  ckge::write_splits(g, out);
  std::cout << "wrote " << out.string() << ": " << g.vocab.num_entities() << " entities, "
            << g.vocab.num_relations() << " relations, " << g.train.size() << "/" << g.valid.size() << "/"
            << g.test.size() << " train/valid/test triples\n";
  return kOk;
}

int cmd_sample(const fs::path& dataset, std::size_t sessions, std::uint64_t seed, const fs::path& out) {
  const auto start = std::chrono::steady_clock::now();
  const auto corpus = ckge::sample_dataset(dataset, sessions, seed, out);
  const auto stats = ckge::session_stats(corpus.sessions, corpus.totals);
  std::cout << ckge::format_stats_tsv(stats);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cerr << "sampled " << sessions << " sessions into " << (out / "sessions").string() << " in " << secs
            << " s\n";
  return kOk;
}

int cmd_train(const TrainFlags& flags) {
  ckge::RunConfig cfg;
  if (!flags.config_file.empty()) ckge::apply_config_file(cfg, flags.config_file);
  auto set_if = [&cfg](const char* key, const std::string& value) {
    if (!value.empty()) ckge::apply_setting(cfg, key, value);
  };
  set_if("dataset", flags.dataset);
  set_if("methods", flags.methods);
  set_if("seeds", flags.seeds);
  set_if("model", flags.model);
  set_if("scenario", flags.scenario);
  set_if("epochs", flags.epochs);
  set_if("out", flags.out);
  set_if("run_id", flags.run_id);
  for (const auto& kv : flags.settings) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ckge::ConfigError("--set expects key=value, got '" + kv + "'");
    ckge::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  const fs::path root = ckge::run_grid(cfg, &std::cerr);
  std::cout << "run complete: " << root.string() << "\n";
  return kOk;
}

int cmd_report(const std::vector<std::string>& runs) {
  for (const auto& r : runs) {
    const auto paths = ckge::write_report(r, &std::cerr);
    std::cout << "wrote " << paths.json.string() << " and " << paths.tsv.string() << "\n";
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  ckge::configure_allocator();
  CLI::App app{"Continual knowledge-graph embedding workbench"};
  app.require_subcommand(1);

  std::string gen_kind = "latent";
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  auto* generate = app.add_subcommand("generate", "Write a synthetic graph directory");
  generate->add_option("--kind", gen_kind, "latent (small, structured) or sparse (benchmark-sized)");
  generate->add_option("--seed", gen_seed, "Generator seed");
  generate->add_option("--out", gen_out, "Output graph directory")->required();

  std::string sample_dataset;
  std::size_t sample_sessions = 5;
  std::uint64_t sample_seed = 0;
  std::string sample_out;
  auto* sample = app.add_subcommand("sample", "Split a graph into learning sessions");
  sample->add_option("--dataset", sample_dataset, "Graph directory")->required();
  sample->add_option("--sessions", sample_sessions, "Number of sessions");
  sample->add_option("--seed", sample_seed, "Sampling seed");
  sample->add_option("--out", sample_out, "Output directory (default: the dataset directory)");

  TrainFlags tf;
  auto* train = app.add_subcommand("train", "Train methods over the sampled sessions");
  train->add_option("--config", tf.config_file, "key = value config file");
  train->add_option("--dataset", tf.dataset, "Sessions directory (or its parent)");
  train->add_option("--methods,--method", tf.methods, "Comma list: batch,finetune,pnn,cwr,l2r,si,dgr or all");
  train->add_option("--seeds,--seed", tf.seeds, "Comma list of seeds");
  train->add_option("--model", tf.model, "transe or analogy");
  train->add_option("--scenario", tf.scenario, "unconstrained, data_constrained or time_data_constrained");
  train->add_option("--epochs", tf.epochs, "Maximum solver epochs per session");
  train->add_option("--out", tf.out, "Runs directory");
  train->add_option("--run-id", tf.run_id, "Run name under --out");
  train->add_option("--set", tf.settings, "Override any config key: key=value (repeatable)");

  std::vector<std::string> report_runs;
  auto* report = app.add_subcommand("report", "Recompute measures and write report.json / report.tsv");
  report->add_option("runs", report_runs, "Run directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (generate->parsed()) return cmd_generate(gen_kind, gen_seed, gen_out);
    if (sample->parsed()) return cmd_sample(sample_dataset, sample_sessions, sample_seed,
                                            sample_out.empty() ? fs::path(sample_dataset) : fs::path(sample_out));
    if (train->parsed()) return cmd_train(tf);
    if (report->parsed()) return cmd_report(report_runs);
  } catch (const ckge::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ckge::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const ckge::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kNumerical;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
  return kOk;
}
