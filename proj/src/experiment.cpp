#include "ckge/experiment.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ckge/checkpoint.hpp"
#include "ckge/errors.hpp"
#include "json.hpp"

namespace ckge {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(const std::string& text, const std::string& where) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) throw DataError(where + ": bad number '" + text + "'");
  return v;
}

bool session_complete(const fs::path& dir) {
  return fs::exists(dir / "method_state.ckpt") && fs::exists(dir / "model.ckpt") && fs::exists(dir / "trace.tsv");
}

void write_text(const fs::path& file, const std::string& text) {
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + file.string());
    out << text;
    if (!out) throw DataError("failed writing " + file.string());
  }
  fs::rename(tmp, file);
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json matrix_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json measures_json(const MeasureList& measures) {
  Json out = Json::object();
  for (const auto& [k, v] : measures) out[k] = optional_json(v);
  return out;
}

}  // namespace

SessionCorpus sample_dataset(const fs::path& graph_dir, std::size_t num_sessions, std::uint64_t seed,
                             const fs::path& out_dir) {
  const GraphSplits splits = load_graph(graph_dir);
  const auto sessions = sample_sessions(splits, num_sessions, seed);
  SessionCorpus corpus = relabel_by_arrival(splits, sessions);
  write_sessions(corpus, out_dir / "sessions");
  return corpus;
}

SessionCorpus load_corpus(const fs::path& dataset) {
  if (fs::exists(dataset / "totals.tsv")) return load_sessions(dataset);
  if (fs::exists(dataset / "sessions" / "totals.tsv")) return load_sessions(dataset / "sessions");
  throw DataError("no sampled sessions under " + dataset.string() + " (run `ckge sample` first)");
}

fs::path run_root(const RunConfig& cfg) { return fs::path(cfg.out) / cfg.run_id; }

fs::path cell_dir(const fs::path& root, Method method, std::uint64_t seed) {
  return root / std::string(to_string(method)) / ("seed-" + std::to_string(seed));
}

fs::path session_dir(const fs::path& cell, std::size_t session) {
  return cell / ("session_" + std::to_string(session));
}

void write_trace(const fs::path& file, const TrainTrace& trace) {
  std::string text = "epoch\tphase\thits10\tmrr\tloss\n";
  for (const auto& e : trace) {
    text += std::to_string(e.epoch) + '\t' + (e.generator ? "generator" : "solver") + '\t' + fmt(e.hits10) + '\t' +
            fmt(e.mrr) + '\t' + fmt(e.loss) + '\n';
  }
  write_text(file, text);
}

TrainTrace read_trace(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open " + file.string());
  TrainTrace trace;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (number == 1 || line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, '\t')) cols.push_back(cell);
    const std::string where = file.string() + ":" + std::to_string(number);
    if (cols.size() != 5) throw DataError(where + ": expected 5 columns");
    TraceEntry e;
    e.epoch = static_cast<std::size_t>(parse_double(cols[0], where));
    if (cols[1] != "generator" && cols[1] != "solver") throw DataError(where + ": unknown phase '" + cols[1] + "'");
    e.generator = cols[1] == "generator";
    e.hits10 = parse_double(cols[2], where);
    e.mrr = parse_double(cols[3], where);
    e.loss = parse_double(cols[4], where);
    trace.push_back(e);
  }
  return trace;
}

CellResult run_cell(const RunConfig& cfg, const SessionCorpus& corpus, Method method, std::uint64_t seed,
                    const fs::path& root, std::ostream* log) {
  auto strategy = make_strategy(method, method_config(cfg));
  const auto filters = session_filters(corpus.sessions);
  const fs::path cell = cell_dir(root, method, seed);
  fs::create_directories(cell);

  CellResult result;
  result.method = method;
  result.seed = seed;
  ModelState model;
  for (std::size_t n = 0; n < corpus.sessions.size(); ++n) {
    const fs::path dir = session_dir(cell, n);
    if (session_complete(dir)) {
      model = model_from_checkpoint(Checkpoint::read(dir / "model.ckpt"));
      const Checkpoint state = Checkpoint::read(dir / "method_state.ckpt");
      strategy->load_state(state, model);
      strategy->load_extra(dir);
      result.traces.push_back(read_trace(dir / "trace.tsv"));
      result.model_bytes.push_back(parse_double(state.get("model_bytes"), dir.string()));
      result.stored_bytes.push_back(parse_double(state.get("stored_bytes"), dir.string()));
      result.models.push_back(model);
      if (log) *log << to_string(method) << " seed " << seed << " session " << n << ": resumed\n";
      continue;
    }
    const auto start = std::chrono::steady_clock::now();
    SessionContext ctx{&corpus.sessions, &filters, n, seed};
    SessionOutcome outcome = strategy->train_session(model, ctx);

    fs::create_directories(dir);
    model_checkpoint(model).write(dir / "model.ckpt");
    strategy->save_extra(dir);
    write_trace(dir / "trace.tsv", outcome.trace);
    Checkpoint state = strategy->save_state();
    state.set("model_bytes", fmt(outcome.model_bytes));
    state.set("stored_bytes", fmt(outcome.stored_bytes));
    state.write(dir / "method_state.ckpt");  // written last: marks the session complete

    result.traces.push_back(std::move(outcome.trace));
    result.model_bytes.push_back(outcome.model_bytes);
    result.stored_bytes.push_back(outcome.stored_bytes);
    result.models.push_back(model);
    if (log) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      *log << to_string(method) << " seed " << seed << " session " << n << ": "
           << result.traces.back().size() << " epochs, " << fmt(std::round(secs * 10.0) / 10.0) << " s\n";
    }
  }
  return result;
}

CellResult load_cell(const fs::path& root, Method method, std::uint64_t seed, std::size_t num_sessions) {
  CellResult result;
  result.method = method;
  result.seed = seed;
  const fs::path cell = cell_dir(root, method, seed);
  for (std::size_t n = 0; n < num_sessions; ++n) {
    const fs::path dir = session_dir(cell, n);
    if (!session_complete(dir)) break;
    const Checkpoint state = Checkpoint::read(dir / "method_state.ckpt");
    result.models.push_back(model_from_checkpoint(Checkpoint::read(dir / "model.ckpt")));
    result.traces.push_back(read_trace(dir / "trace.tsv"));
    result.model_bytes.push_back(parse_double(state.get("model_bytes"), dir.string()));
    result.stored_bytes.push_back(parse_double(state.get("stored_bytes"), dir.string()));
  }
  return result;
}

double mean_lca(const std::vector<TrainTrace>& traces, bool include_generator_epochs) {
  if (traces.empty()) throw std::invalid_argument("no traces");
  double sum = 0.0;
  for (const auto& t : traces) sum += lca(t, include_generator_epochs, TraceMeasure::Hits10);
  return sum / static_cast<double>(traces.size());
}

CellEvaluation evaluate_cell(const CellResult& cell, const SessionCorpus& corpus, const RunConfig& cfg) {
  if (cell.completed() != corpus.sessions.size()) {
    throw DataError("cell " + std::string(to_string(cell.method)) + " seed " + std::to_string(cell.seed) +
                    " is missing checkpoints for " + std::to_string(corpus.sessions.size() - cell.completed()) +
                    " session(s)");
  }
  CellEvaluation ev;
  const auto filters = session_filters(corpus.sessions);
  ev.matrices = build_matrices(cell.models, corpus.sessions, filters, cell.seed, cfg.ties);
  const auto& h = ev.matrices.hits10;
  const auto& m = ev.matrices.mrr;
  double total_train = 0.0;
  for (const auto& s : corpus.sessions) total_train += static_cast<double>(s.train.size());
  ev.measures = {
      {"acc", acc(h)},
      {"fwt", fwt(h)},
      {"bwt", bwt(h)},
      {"plus_bwt", plus_bwt(h)},
      {"rem", rem(h)},
      {"acc_mrr", acc(m)},
      {"fwt_mrr", fwt(m)},
      {"bwt_mrr", bwt(m)},
      {"plus_bwt_mrr", plus_bwt(m)},
      {"rem_mrr", rem(m)},
      {"ms", ms(cell.model_bytes)},
      {"sss", sss(cell.stored_bytes, kBytesPerTriple * total_train)},
      {"lca", mean_lca(cell.traces, true)},
      {"lca_solver", mean_lca(cell.traces, false)},
  };
  return ev;
}

Aggregate aggregate(const std::vector<double>& values) {
  Aggregate a;
  a.n = values.size();
  if (values.empty()) return a;
  for (double v : values) a.mean += v;
  a.mean /= static_cast<double>(a.n);
  if (a.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - a.mean) * (v - a.mean);
    a.std = std::sqrt(ss / static_cast<double>(a.n - 1));
  }
  return a;
}

fs::path run_grid(RunConfig cfg, std::ostream* log) {
  if (cfg.dataset.empty()) throw ConfigError("no dataset given");
  cfg.dataset = fs::absolute(cfg.dataset).lexically_normal().string();
  const SessionCorpus corpus = load_corpus(cfg.dataset);
  const auto notice = resolve_config(cfg, corpus.totals.entities);
  for (const auto& w : notice.warnings) {
    if (log) *log << "warning: " << w << "\n";
  }

  const fs::path root = run_root(cfg);
  fs::create_directories(root);
  const std::string echo = format_config(cfg);
  const fs::path config_file = root / "config.txt";
  if (fs::exists(config_file)) {
    std::ifstream in(config_file);
    std::stringstream existing;
    existing << in.rdbuf();
    if (existing.str() != echo) {
      throw ConfigError("run directory " + root.string() + " holds a different config; choose another run_id");
    }
  } else {
    write_text(config_file, echo);
  }

  for (Method method : cfg.methods) {
    for (std::uint64_t seed : cfg.seeds) {
      const auto cell = run_cell(cfg, corpus, method, seed, root, log);
      const auto ev = evaluate_cell(cell, corpus, cfg);
      Json stored;
      stored["method"] = std::string(to_string(method));
      stored["seed"] = seed;
      stored["measures"] = measures_json(ev.measures);
      write_text(cell_dir(root, method, seed) / "measures.json", stored.dump(2) + "\n");
    }
  }
  write_report(root, log);
  return root;
}

ReportPaths write_report(const fs::path& root, std::ostream* log) {
  const fs::path config_file = root / "config.txt";
  if (!fs::exists(config_file)) throw DataError("no config.txt under " + root.string());
  RunConfig cfg;
  apply_config_file(cfg, config_file);
  const SessionCorpus corpus = load_corpus(cfg.dataset);
  const std::size_t n_sessions = corpus.sessions.size();

  Json report;
  Json config = Json::object();
  for (const auto& [k, v] : config_entries(cfg)) config[k] = v;
  report["config"] = config;
  report["sessions"] = n_sessions;
  report["seeds"] = cfg.seeds;

  Json runs = Json::array();
  Json gaps = Json::array();
  std::vector<std::string> measure_names;
  // per method: measure -> values over complete seeds
  std::vector<std::vector<std::vector<double>>> values(cfg.methods.size());

  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const Method method = cfg.methods[mi];
    for (std::uint64_t seed : cfg.seeds) {
      const CellResult cell = load_cell(root, method, seed, n_sessions);
      Json run;
      run["method"] = std::string(to_string(method));
      run["seed"] = seed;
      run["completed_sessions"] = cell.completed();
      if (cell.completed() < n_sessions) {
        run["complete"] = false;
        Json gap;
        gap["method"] = std::string(to_string(method));
        gap["seed"] = seed;
        gap["completed_sessions"] = cell.completed();
        gap["expected_sessions"] = n_sessions;
        gaps.push_back(gap);
        runs.push_back(run);
        if (log) *log << "gap: " << to_string(method) << " seed " << seed << " has " << cell.completed() << "/"
                      << n_sessions << " sessions\n";
        continue;
      }
      const CellEvaluation ev = evaluate_cell(cell, corpus, cfg);
      run["complete"] = true;
      run["measures"] = measures_json(ev.measures);
      const fs::path stored_file = cell_dir(root, method, seed) / "measures.json";
      if (fs::exists(stored_file)) {
        std::ifstream in(stored_file);
        const Json stored = Json::parse(in);
        run["matches_stored_measures"] = stored.at("measures") == run["measures"];
      }
      run["matrices"] = {{"hits10", matrix_json(ev.matrices.hits10)}, {"mrr", matrix_json(ev.matrices.mrr)}};
      run["model_bytes"] = cell.model_bytes;
      run["stored_bytes"] = cell.stored_bytes;
      Json traces = Json::array();
      for (const auto& trace : cell.traces) {
        Json t = Json::array();
        for (const auto& e : trace) {
          t.push_back({{"epoch", e.epoch},
                       {"phase", e.generator ? "generator" : "solver"},
                       {"hits10", e.hits10},
                       {"mrr", e.mrr},
                       {"loss", e.loss}});
        }
        traces.push_back(std::move(t));
      }
      run["traces"] = std::move(traces);
      runs.push_back(std::move(run));

      if (measure_names.empty()) {
        for (const auto& [k, v] : ev.measures) measure_names.push_back(k);
      }
      auto& per_method = values[mi];
      per_method.resize(measure_names.size());
      for (std::size_t k = 0; k < ev.measures.size(); ++k) {
        if (ev.measures[k].second) per_method[k].push_back(*ev.measures[k].second);
      }
    }
  }

  Json summary = Json::object();
  std::string tsv = "method\tmeasure\tmean\tstd\tn\n";
  for (std::size_t mi = 0; mi < cfg.methods.size(); ++mi) {
    const std::string name(to_string(cfg.methods[mi]));
    Json block = Json::object();
    for (std::size_t k = 0; k < measure_names.size(); ++k) {
      const auto& vals = k < values[mi].size() ? values[mi][k] : std::vector<double>{};
      const Aggregate a = aggregate(vals);
      if (a.n == 0) {
        block[measure_names[k]] = {{"mean", nullptr}, {"std", nullptr}, {"n", 0}};
        tsv += name + '\t' + measure_names[k] + "\tNA\tNA\t0\n";
      } else {
        block[measure_names[k]] = {{"mean", a.mean}, {"std", a.std}, {"n", a.n}};
        tsv += name + '\t' + measure_names[k] + '\t' + fmt(a.mean) + '\t' + fmt(a.std) + '\t' + std::to_string(a.n) + '\n';
      }
    }
    summary[name] = std::move(block);
  }
  report["summary"] = std::move(summary);
  report["gaps"] = std::move(gaps);
  report["runs"] = std::move(runs);

  ReportPaths paths{root / "report.json", root / "report.tsv"};
  write_text(paths.json, report.dump(1) + "\n");
  write_text(paths.tsv, tsv);
  return paths;
}

}  // namespace ckge
