#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace ckge {

using EntityId = std::uint32_t;
using RelationId = std::uint32_t;

struct Triple {
  EntityId head = 0;
  RelationId relation = 0;
  EntityId tail = 0;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept {
    std::uint64_t h = (static_cast<std::uint64_t>(t.head) << 32) ^ t.tail;
    h ^= static_cast<std::uint64_t>(t.relation) * 0x9e3779b97f4a7c15ULL;
    h ^= h >> 29;
    h *= 0xbf58476d1ce4e5b9ULL;
    return static_cast<std::size_t>(h ^ (h >> 32));
  }
};

using TripleList = std::vector<Triple>;
using TripleSet = std::unordered_set<Triple, TripleHash>;

// Bidirectional name <-> id maps. Ids are dense and follow insertion order.
class Vocab {
 public:
  EntityId add_entity(std::string name);
  RelationId add_relation(std::string name);

  std::optional<EntityId> find_entity(std::string_view name) const;
  std::optional<RelationId> find_relation(std::string_view name) const;

  const std::string& entity_name(EntityId id) const { return entity_names_.at(id); }
  const std::string& relation_name(RelationId id) const { return relation_names_.at(id); }

  std::size_t num_entities() const { return entity_names_.size(); }
  std::size_t num_relations() const { return relation_names_.size(); }

  const std::vector<std::string>& entity_names() const { return entity_names_; }
  const std::vector<std::string>& relation_names() const { return relation_names_; }

  bool valid(const Triple& t) const {
    return t.head < num_entities() && t.tail < num_entities() && t.relation < num_relations();
  }

 private:
  std::vector<std::string> entity_names_;
  std::vector<std::string> relation_names_;
  std::unordered_map<std::string, EntityId> entity_index_;
  std::unordered_map<std::string, RelationId> relation_index_;
};

struct GraphSplits {
  TripleList train;
  TripleList valid;
  TripleList test;
  Vocab vocab;
  // Duplicate lines dropped while loading, summed over the three splits.
  std::size_t duplicates_dropped = 0;
};

// Reads <dir>/{entity2id,relation2id,train,valid,test}.tsv. Throws DataError
// naming the file and line on any malformed input.
GraphSplits load_graph(const std::filesystem::path& dir);

void write_splits(const GraphSplits& splits, const std::filesystem::path& dir);

Vocab read_vocab(const std::filesystem::path& entity_file,
                 const std::filesystem::path& relation_file);
void write_vocab(const Vocab& vocab, const std::filesystem::path& entity_file,
                 const std::filesystem::path& relation_file);

// Triple files are name based; unknown names are a DataError. When
// `duplicates` is non-null repeated lines are dropped and counted.
TripleList read_triples(const std::filesystem::path& file, const Vocab& vocab,
                        std::size_t* duplicates = nullptr);
void write_triples(const std::filesystem::path& file, std::span<const Triple> triples,
                   const Vocab& vocab);

// Sorted, duplicate-free ids occurring in the given triples.
std::vector<EntityId> entities_of(std::span<const Triple> triples);
std::vector<RelationId> relations_of(std::span<const Triple> triples);

TripleSet to_set(std::span<const Triple> triples);

}  // namespace ckge
