#include "ckge/kg_data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ckge/errors.hpp"

namespace ckge {

namespace fs = std::filesystem;

EntityId Vocab::add_entity(std::string name) {
  const auto id = static_cast<EntityId>(entity_names_.size());
  auto [it, inserted] = entity_index_.emplace(name, id);
  if (!inserted) throw DataError("duplicate entity name '" + name + "'");
  entity_names_.push_back(std::move(name));
  return id;
}

RelationId Vocab::add_relation(std::string name) {
  const auto id = static_cast<RelationId>(relation_names_.size());
  auto [it, inserted] = relation_index_.emplace(name, id);
  if (!inserted) throw DataError("duplicate relation name '" + name + "'");
  relation_names_.push_back(std::move(name));
  return id;
}

std::optional<EntityId> Vocab::find_entity(std::string_view name) const {
  auto it = entity_index_.find(std::string(name));
  if (it == entity_index_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationId> Vocab::find_relation(std::string_view name) const {
  auto it = relation_index_.find(std::string(name));
  if (it == relation_index_.end()) return std::nullopt;
  return it->second;
}

namespace {

[[noreturn]] void fail(const fs::path& file, std::size_t line, const std::string& what) {
  std::ostringstream os;
  os << file.string() << ":" << line << ": " << what;
  throw DataError(os.str());
}

std::ifstream open_input(const fs::path& file) {
  if (!fs::exists(file)) throw DataError("missing file " + file.string());
  std::ifstream in(file, std::ios::binary);
  if (!in) throw DataError("cannot open " + file.string());
  return in;
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return cols;
}

// Calls fn(line_number, columns) for every non-empty line.
template <class Fn>
void for_each_row(const fs::path& file, Fn&& fn) {
  auto in = open_input(file);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fn(number, split_tabs(line));
  }
}

template <class AddFn>
void read_vocab_file(const fs::path& file, AddFn&& add) {
  std::size_t expected = 0;
  for_each_row(file, [&](std::size_t line, const std::vector<std::string_view>& cols) {
    if (cols.size() != 2) fail(file, line, "expected 2 columns, got " + std::to_string(cols.size()));
    std::size_t id = 0;
    const auto* first = cols[1].data();
    const auto* last = first + cols[1].size();
    auto [ptr, ec] = std::from_chars(first, last, id);
    if (ec != std::errc() || ptr != last) fail(file, line, "bad id '" + std::string(cols[1]) + "'");
    if (id != expected) {
      fail(file, line, "id " + std::to_string(id) + " out of order (expected " +
                           std::to_string(expected) + ")");
    }
    try {
      add(std::string(cols[0]));
    } catch (const DataError& e) {
      fail(file, line, e.what());
    }
    ++expected;
  });
}

}  // namespace

Vocab read_vocab(const fs::path& entity_file, const fs::path& relation_file) {
  Vocab vocab;
  read_vocab_file(entity_file, [&](std::string name) { vocab.add_entity(std::move(name)); });
  read_vocab_file(relation_file, [&](std::string name) { vocab.add_relation(std::move(name)); });
  return vocab;
}

void write_vocab(const Vocab& vocab, const fs::path& entity_file, const fs::path& relation_file) {
  auto write = [](const fs::path& file, const std::vector<std::string>& names) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw DataError("cannot write " + file.string());
    for (std::size_t i = 0; i < names.size(); ++i) out << names[i] << '\t' << i << '\n';
  };
  write(entity_file, vocab.entity_names());
  write(relation_file, vocab.relation_names());
}

TripleList read_triples(const fs::path& file, const Vocab& vocab, std::size_t* duplicates) {
  TripleList triples;
  TripleSet seen;
  for_each_row(file, [&](std::size_t line, const std::vector<std::string_view>& cols) {
    if (cols.size() != 3) fail(file, line, "expected 3 columns, got " + std::to_string(cols.size()));
    const auto head = vocab.find_entity(cols[0]);
    const auto relation = vocab.find_relation(cols[1]);
    const auto tail = vocab.find_entity(cols[2]);
    if (!head) fail(file, line, "unknown entity '" + std::string(cols[0]) + "'");
    if (!relation) fail(file, line, "unknown relation '" + std::string(cols[1]) + "'");
    if (!tail) fail(file, line, "unknown entity '" + std::string(cols[2]) + "'");
    const Triple t{*head, *relation, *tail};
    if (duplicates != nullptr) {
      if (!seen.insert(t).second) {
        ++*duplicates;
        return;
      }
    }
    triples.push_back(t);
  });
  return triples;
}

void write_triples(const fs::path& file, std::span<const Triple> triples, const Vocab& vocab) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw DataError("cannot write " + file.string());
  for (const auto& t : triples) {
    out << vocab.entity_name(t.head) << '\t' << vocab.relation_name(t.relation) << '\t'
        << vocab.entity_name(t.tail) << '\n';
  }
}

GraphSplits load_graph(const fs::path& dir) {
  GraphSplits splits;
  splits.vocab = read_vocab(dir / "entity2id.tsv", dir / "relation2id.tsv");
  std::size_t dups = 0;
  splits.train = read_triples(dir / "train.tsv", splits.vocab, &dups);
  splits.valid = read_triples(dir / "valid.tsv", splits.vocab, &dups);
  splits.test = read_triples(dir / "test.tsv", splits.vocab, &dups);
  splits.duplicates_dropped = dups;
  if (splits.train.empty()) throw DataError((dir / "train.tsv").string() + ": empty split");
  if (dups > 0) {
    std::cerr << "warning: dropped " << dups << " duplicate triples while loading "
              << dir.string() << "\n";
  }

  const TripleSet train_set = to_set(splits.train);
  const TripleSet valid_set = to_set(splits.valid);
  auto check_disjoint = [&](const TripleList& triples, const TripleSet& other,
                            const char* a, const char* b) {
    for (const auto& t : triples) {
      if (other.contains(t)) {
        throw DataError(std::string("splits overlap: triple (") + splits.vocab.entity_name(t.head) +
                        ", " + splits.vocab.relation_name(t.relation) + ", " +
                        splits.vocab.entity_name(t.tail) + ") is in both " + a + " and " + b);
      }
    }
  };
  check_disjoint(splits.valid, train_set, "valid", "train");
  check_disjoint(splits.test, train_set, "test", "train");
  check_disjoint(splits.test, valid_set, "test", "valid");
  return splits;
}

void write_splits(const GraphSplits& splits, const fs::path& dir) {
  fs::create_directories(dir);
  write_vocab(splits.vocab, dir / "entity2id.tsv", dir / "relation2id.tsv");
  write_triples(dir / "train.tsv", splits.train, splits.vocab);
  write_triples(dir / "valid.tsv", splits.valid, splits.vocab);
  write_triples(dir / "test.tsv", splits.test, splits.vocab);
}

std::vector<EntityId> entities_of(std::span<const Triple> triples) {
  std::vector<EntityId> ids;
  ids.reserve(triples.size() * 2);
  for (const auto& t : triples) {
    ids.push_back(t.head);
    ids.push_back(t.tail);
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<RelationId> relations_of(std::span<const Triple> triples) {
  std::vector<RelationId> ids;
  ids.reserve(triples.size());
  for (const auto& t : triples) ids.push_back(t.relation);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

TripleSet to_set(std::span<const Triple> triples) {
  TripleSet set;
  set.reserve(triples.size());
  set.insert(triples.begin(), triples.end());
  return set;
}

}  // namespace ckge
