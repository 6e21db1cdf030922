#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ckge/kg_data.hpp"

namespace ckge {

// One learning session. `entities`/`relations` come from this session's
// training triples only; the `observed_*` sets are cumulative over sessions
// 0..index. All id vectors are sorted.
struct SessionDataset {
  std::size_t index = 0;
  TripleList train;
  TripleList valid;
  TripleList test;
  std::vector<EntityId> entities;
  std::vector<RelationId> relations;
  std::vector<EntityId> observed_entities;
  std::vector<RelationId> observed_relations;
};

// Sizes of the source graph, used as coverage denominators.
struct GraphTotals {
  std::size_t entities = 0;
  std::size_t relations = 0;
  std::size_t train = 0;
  std::size_t valid = 0;
  std::size_t test = 0;
};

GraphTotals totals_of(const GraphSplits& splits);

// Partitions splits.train into `num_sessions` disjoint training sets by
// uniform sampling without replacement (floor(|train|/N) each, remainder to
// the last session). Valid/test triples are assigned to session n when all
// of their ids are in the cumulative observed sets of session n.
std::vector<SessionDataset> sample_sessions(const GraphSplits& splits, std::size_t num_sessions,
                                            std::uint64_t seed);

struct SessionStats {
  std::size_t entities = 0;
  double entity_coverage = 0.0;  // |observed entities| / |all entities|
  std::size_t relations = 0;
  double relation_coverage = 0.0;
  std::size_t train = 0;
  double train_coverage = 0.0;  // cumulative train triples / |train|
  std::size_t valid = 0;
  double valid_coverage = 0.0;
  std::size_t test = 0;
  double test_coverage = 0.0;
};

std::vector<SessionStats> session_stats(const std::vector<SessionDataset>& sessions,
                                        const GraphTotals& totals);

// Renders the statistics as a table with one row per statistic and one
// column per session, cells formatted as "value/(pct%)".
std::string format_stats_tsv(const std::vector<SessionStats>& stats);

// A sampled dataset in arrival order: entity and relation ids are renumbered
// by the session in which they first appear in training data, so that the
// observed set of every session is the id prefix [0, |observed|).
struct SessionCorpus {
  Vocab vocab;
  GraphTotals totals;
  std::vector<SessionDataset> sessions;
};

SessionCorpus relabel_by_arrival(const GraphSplits& splits,
                                 const std::vector<SessionDataset>& sessions);

// Layout: <root>/{entity2id.tsv, relation2id.tsv, totals.tsv, stats.tsv,
// <n>/train.tsv, <n>/valid.tsv, <n>/test.tsv}.
void write_sessions(const SessionCorpus& corpus, const std::filesystem::path& root);
SessionCorpus load_sessions(const std::filesystem::path& root);

// Recomputes entity/relation sets of a session sequence from its triples.
void recompute_session_sets(std::vector<SessionDataset>& sessions);

}  // namespace ckge
