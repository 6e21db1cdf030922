#include "ckge/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ckge/errors.hpp"
#include "ckge/rng.hpp"

namespace ckge {

namespace fs = std::filesystem;

GraphTotals totals_of(const GraphSplits& splits) {
  return {splits.vocab.num_entities(), splits.vocab.num_relations(), splits.train.size(),
          splits.valid.size(), splits.test.size()};
}

namespace {

template <class Id>
std::vector<Id> set_union(const std::vector<Id>& a, const std::vector<Id>& b) {
  std::vector<Id> out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// Keeps the triples whose ids are all observed. `entity_seen` and
// `relation_seen` are dense membership flags.
TripleList filter_observed(const TripleList& triples, const std::vector<char>& entity_seen,
                           const std::vector<char>& relation_seen) {
  TripleList out;
  for (const auto& t : triples) {
    if (entity_seen[t.head] && entity_seen[t.tail] && relation_seen[t.relation]) out.push_back(t);
  }
  return out;
}

}  // namespace

void recompute_session_sets(std::vector<SessionDataset>& sessions) {
  std::vector<EntityId> seen_e;
  std::vector<RelationId> seen_r;
  for (std::size_t n = 0; n < sessions.size(); ++n) {
    auto& s = sessions[n];
    s.index = n;
    s.entities = entities_of(s.train);
    s.relations = relations_of(s.train);
    seen_e = set_union(seen_e, s.entities);
    seen_r = set_union(seen_r, s.relations);
    s.observed_entities = seen_e;
    s.observed_relations = seen_r;
  }
}

std::vector<SessionDataset> sample_sessions(const GraphSplits& splits, std::size_t num_sessions,
                                            std::uint64_t seed) {
  if (num_sessions == 0) throw ConfigError("session count must be at least 1");
  const std::size_t total = splits.train.size();
  if (num_sessions > total) {
    throw ConfigError("session count " + std::to_string(num_sessions) +
                      " exceeds the number of training triples (" + std::to_string(total) + ")");
  }

  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = Rng::derive(seed, "sampler");
  rng.shuffle(std::span<std::size_t>(order));

  const std::size_t per_session = total / num_sessions;
  std::vector<SessionDataset> sessions(num_sessions);
  std::vector<char> entity_seen(splits.vocab.num_entities(), 0);
  std::vector<char> relation_seen(splits.vocab.num_relations(), 0);

  for (std::size_t n = 0; n < num_sessions; ++n) {
    const std::size_t begin = n * per_session;
    const std::size_t end = (n + 1 == num_sessions) ? total : begin + per_session;
    std::vector<std::size_t> picked(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                    order.begin() + static_cast<std::ptrdiff_t>(end));
    // Within a session triples keep their file order.
    std::sort(picked.begin(), picked.end());
    auto& s = sessions[n];
    s.train.reserve(picked.size());
    for (auto i : picked) s.train.push_back(splits.train[i]);
    for (const auto& t : s.train) {
      entity_seen[t.head] = 1;
      entity_seen[t.tail] = 1;
      relation_seen[t.relation] = 1;
    }
    s.valid = filter_observed(splits.valid, entity_seen, relation_seen);
    s.test = filter_observed(splits.test, entity_seen, relation_seen);
  }
  recompute_session_sets(sessions);
  return sessions;
}

std::vector<SessionStats> session_stats(const std::vector<SessionDataset>& sessions,
                                        const GraphTotals& totals) {
  auto ratio = [](std::size_t num, std::size_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
  };
  std::vector<SessionStats> out;
  std::size_t cumulative_train = 0;
  for (const auto& s : sessions) {
    cumulative_train += s.train.size();
    SessionStats st;
    st.entities = s.entities.size();
    st.entity_coverage = ratio(s.observed_entities.size(), totals.entities);
    st.relations = s.relations.size();
    st.relation_coverage = ratio(s.observed_relations.size(), totals.relations);
    st.train = s.train.size();
    st.train_coverage = ratio(cumulative_train, totals.train);
    st.valid = s.valid.size();
    st.valid_coverage = ratio(s.valid.size(), totals.valid);
    st.test = s.test.size();
    st.test_coverage = ratio(s.test.size(), totals.test);
    out.push_back(st);
  }
  return out;
}

std::string format_stats_tsv(const std::vector<SessionStats>& stats) {
  std::ostringstream os;
  os << "stat";
  for (std::size_t n = 0; n < stats.size(); ++n) os << "\tLS-" << (n + 1);
  os << '\n';
  auto row = [&](const char* name, auto count, auto coverage) {
    os << name;
    for (const auto& s : stats) {
      os << '\t' << count(s) << "/(" << static_cast<long>(std::lround(100.0 * coverage(s)))
         << "%)";
    }
    os << '\n';
  };
  row("E_n", [](const SessionStats& s) { return s.entities; },
      [](const SessionStats& s) { return s.entity_coverage; });
  row("R_n", [](const SessionStats& s) { return s.relations; },
      [](const SessionStats& s) { return s.relation_coverage; });
  row("D_Tr", [](const SessionStats& s) { return s.train; },
      [](const SessionStats& s) { return s.train_coverage; });
  row("D_Va", [](const SessionStats& s) { return s.valid; },
      [](const SessionStats& s) { return s.valid_coverage; });
  row("D_Te", [](const SessionStats& s) { return s.test; },
      [](const SessionStats& s) { return s.test_coverage; });
  return os.str();
}

SessionCorpus relabel_by_arrival(const GraphSplits& splits,
                                 const std::vector<SessionDataset>& sessions) {
  constexpr auto unset = static_cast<std::uint32_t>(-1);
  std::vector<std::uint32_t> entity_map(splits.vocab.num_entities(), unset);
  std::vector<std::uint32_t> relation_map(splits.vocab.num_relations(), unset);
  std::vector<std::uint32_t> entity_order;
  std::vector<std::uint32_t> relation_order;

  for (const auto& s : sessions) {
    for (auto e : s.entities) {
      if (entity_map[e] == unset) {
        entity_map[e] = static_cast<std::uint32_t>(entity_order.size());
        entity_order.push_back(e);
      }
    }
    for (auto r : s.relations) {
      if (relation_map[r] == unset) {
        relation_map[r] = static_cast<std::uint32_t>(relation_order.size());
        relation_order.push_back(r);
      }
    }
  }
  for (std::uint32_t e = 0; e < entity_map.size(); ++e) {
    if (entity_map[e] == unset) {
      entity_map[e] = static_cast<std::uint32_t>(entity_order.size());
      entity_order.push_back(e);
    }
  }
  for (std::uint32_t r = 0; r < relation_map.size(); ++r) {
    if (relation_map[r] == unset) {
      relation_map[r] = static_cast<std::uint32_t>(relation_order.size());
      relation_order.push_back(r);
    }
  }

  SessionCorpus corpus;
  for (auto e : entity_order) corpus.vocab.add_entity(splits.vocab.entity_name(e));
  for (auto r : relation_order) corpus.vocab.add_relation(splits.vocab.relation_name(r));
  corpus.totals = totals_of(splits);

  auto remap = [&](const TripleList& triples) {
    TripleList out;
    out.reserve(triples.size());
    for (const auto& t : triples) {
      out.push_back({entity_map[t.head], relation_map[t.relation], entity_map[t.tail]});
    }
    return out;
  };
  for (const auto& s : sessions) {
    SessionDataset r;
    r.index = s.index;
    r.train = remap(s.train);
    r.valid = remap(s.valid);
    r.test = remap(s.test);
    corpus.sessions.push_back(std::move(r));
  }
  recompute_session_sets(corpus.sessions);
  return corpus;
}

void write_sessions(const SessionCorpus& corpus, const fs::path& root) {
  fs::create_directories(root);
  write_vocab(corpus.vocab, root / "entity2id.tsv", root / "relation2id.tsv");
  {
    std::ofstream out(root / "totals.tsv", std::ios::binary);
    if (!out) throw DataError("cannot write " + (root / "totals.tsv").string());
    out << "entities\t" << corpus.totals.entities << '\n'
        << "relations\t" << corpus.totals.relations << '\n'
        << "train\t" << corpus.totals.train << '\n'
        << "valid\t" << corpus.totals.valid << '\n'
        << "test\t" << corpus.totals.test << '\n';
  }
  {
    std::ofstream out(root / "stats.tsv", std::ios::binary);
    out << format_stats_tsv(session_stats(corpus.sessions, corpus.totals));
  }
  for (const auto& s : corpus.sessions) {
    const auto dir = root / std::to_string(s.index);
    fs::create_directories(dir);
    write_triples(dir / "train.tsv", s.train, corpus.vocab);
    write_triples(dir / "valid.tsv", s.valid, corpus.vocab);
    write_triples(dir / "test.tsv", s.test, corpus.vocab);
  }
}

SessionCorpus load_sessions(const fs::path& root) {
  SessionCorpus corpus;
  corpus.vocab = read_vocab(root / "entity2id.tsv", root / "relation2id.tsv");
  {
    const auto file = root / "totals.tsv";
    if (!fs::exists(file)) throw DataError("missing file " + file.string());
    std::ifstream in(file);
    std::string key;
    std::size_t value = 0;
    while (in >> key >> value) {
      if (key == "entities") corpus.totals.entities = value;
      else if (key == "relations") corpus.totals.relations = value;
      else if (key == "train") corpus.totals.train = value;
      else if (key == "valid") corpus.totals.valid = value;
      else if (key == "test") corpus.totals.test = value;
    }
  }
  for (std::size_t n = 0;; ++n) {
    const auto dir = root / std::to_string(n);
    if (!fs::exists(dir)) break;
    SessionDataset s;
    s.index = n;
    s.train = read_triples(dir / "train.tsv", corpus.vocab);
    s.valid = read_triples(dir / "valid.tsv", corpus.vocab);
    s.test = read_triples(dir / "test.tsv", corpus.vocab);
    if (s.train.empty()) throw DataError((dir / "train.tsv").string() + ": empty split");
    corpus.sessions.push_back(std::move(s));
  }
  if (corpus.sessions.empty()) throw DataError("no session directories under " + root.string());
  recompute_session_sets(corpus.sessions);
  return corpus;
}

}  // namespace ckge
