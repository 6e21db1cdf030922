#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ckge/config.hpp"
#include "ckge/evaluation.hpp"
#include "ckge/methods.hpp"
#include "ckge/sampler.hpp"

namespace ckge {

// Samples `num_sessions` sessions from the graph in `graph_dir` and writes
// them to <out_dir>/sessions.
SessionCorpus sample_dataset(const std::filesystem::path& graph_dir, std::size_t num_sessions,
                             std::uint64_t seed, const std::filesystem::path& out_dir);

// Accepts either a sessions directory or a directory holding `sessions/`.
SessionCorpus load_corpus(const std::filesystem::path& dataset);

std::filesystem::path run_root(const RunConfig& cfg);
std::filesystem::path cell_dir(const std::filesystem::path& root, Method method, std::uint64_t seed);
std::filesystem::path session_dir(const std::filesystem::path& cell, std::size_t session);

// Everything produced by one (method, seed) run.
struct CellResult {
  Method method = Method::Finetune;
  std::uint64_t seed = 0;
  std::vector<ModelState> models;  // evaluated model after each session
  std::vector<TrainTrace> traces;
  std::vector<double> model_bytes;
  std::vector<double> stored_bytes;

  std::size_t completed() const { return models.size(); }
};

// Trains every session of one cell, skipping sessions whose checkpoints are
// already on disk. Writes model.ckpt, method_state.ckpt, trace.tsv (and the
// generator for DGR) into each session directory.
CellResult run_cell(const RunConfig& cfg, const SessionCorpus& corpus, Method method, std::uint64_t seed,
                    const std::filesystem::path& root, std::ostream* log = nullptr);

// Reads the completed sessions of a cell back from its checkpoints.
CellResult load_cell(const std::filesystem::path& root, Method method, std::uint64_t seed,
                     std::size_t num_sessions);

// Named scalar measures; absent values (N = 1 transfer measures) are nullopt.
using MeasureList = std::vector<std::pair<std::string, std::optional<double>>>;

struct CellEvaluation {
  MetricMatrices matrices;
  MeasureList measures;
};

CellEvaluation evaluate_cell(const CellResult& cell, const SessionCorpus& corpus, const RunConfig& cfg);

// Mean learning-curve area over sessions.
double mean_lca(const std::vector<TrainTrace>& traces, bool include_generator_epochs);

void write_trace(const std::filesystem::path& file, const TrainTrace& trace);
TrainTrace read_trace(const std::filesystem::path& file);

// Full grid: writes config.txt, runs every (method, seed) cell, stores each
// cell's measures.json and finally the report. Returns the run root.
std::filesystem::path run_grid(RunConfig cfg, std::ostream* log = nullptr);

struct ReportPaths {
  std::filesystem::path json;
  std::filesystem::path tsv;
};

// Recomputes every measure from the checkpoints under `root` (which must
// hold config.txt) and writes report.json and report.tsv there. Incomplete
// cells are listed as gaps.
ReportPaths write_report(const std::filesystem::path& root, std::ostream* log = nullptr);

// Mean and sample standard deviation (0 for a single value).
struct Aggregate {
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};
Aggregate aggregate(const std::vector<double>& values);

}  // namespace ckge
