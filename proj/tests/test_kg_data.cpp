#include "doctest.h"

#include <algorithm>
#include <set>

#include "ckge/errors.hpp"
#include "ckge/kg_data.hpp"
#include "ckge/rng.hpp"
#include "support/tempdir.hpp"

using namespace ckge;
using testing::TempDir;
using testing::read_text;
using testing::write_text;

namespace {

void write_toy(const std::filesystem::path& dir) {
  write_text(dir / "entity2id.tsv", "a\t0\nb\t1\nc\t2\n");
  write_text(dir / "relation2id.tsv", "r\t0\n");
  write_text(dir / "train.tsv", "a\tr\tb\n");
  write_text(dir / "valid.tsv", "b\tr\tc\n");
  write_text(dir / "test.tsv", "c\tr\ta\n");
}

}  // namespace

TEST_CASE("toy directory loads with three entities and one relation") {
  TempDir dir("toy");
  write_toy(dir.path());
  const auto g = load_graph(dir.path());
  CHECK(g.vocab.num_entities() == 3);
  CHECK(g.vocab.num_relations() == 1);
  REQUIRE(g.train.size() == 1);
  CHECK(g.train[0] == Triple{0, 0, 1});
  CHECK(g.valid[0] == Triple{1, 0, 2});
  CHECK(g.test[0] == Triple{2, 0, 0});
}

TEST_CASE("ids follow vocab file line order, not name order") {
  TempDir dir("order");
  write_toy(dir.path());
  write_text(dir / "entity2id.tsv", "zeta\t0\nalpha\t1\nmid\t2\n");
  write_text(dir / "train.tsv", "zeta\tr\talpha\n");
  write_text(dir / "valid.tsv", "alpha\tr\tmid\n");
  write_text(dir / "test.tsv", "mid\tr\tzeta\n");
  const auto g = load_graph(dir.path());
  CHECK(*g.vocab.find_entity("zeta") == 0);
  CHECK(*g.vocab.find_entity("alpha") == 1);
  CHECK(g.train[0] == Triple{0, 0, 1});
}

TEST_CASE("load errors name the problem") {
  TempDir dir("errors");
  write_toy(dir.path());

  SUBCASE("empty train split") {
    write_text(dir / "train.tsv", "");
    CHECK_THROWS_WITH_AS(load_graph(dir.path()), doctest::Contains("empty split"), DataError);
  }
  SUBCASE("missing file") {
    std::filesystem::remove(dir / "test.tsv");
    CHECK_THROWS_WITH_AS(load_graph(dir.path()), doctest::Contains("test.tsv"), DataError);
  }
  SUBCASE("wrong column count carries the line number") {
    write_text(dir / "train.tsv", "a\tr\tb\na\tr\n");
    CHECK_THROWS_WITH_AS(load_graph(dir.path()), doctest::Contains("train.tsv:2"), DataError);
  }
  SUBCASE("unknown name") {
    write_text(dir / "valid.tsv", "b\tr\tq\n");
    CHECK_THROWS_WITH_AS(load_graph(dir.path()), doctest::Contains("valid.tsv:1"), DataError);
  }
  SUBCASE("duplicate vocab entry") {
    write_text(dir / "entity2id.tsv", "a\t0\nb\t1\na\t2\n");
    CHECK_THROWS_WITH_AS(load_graph(dir.path()), doctest::Contains("entity2id.tsv:3"), DataError);
  }
  SUBCASE("overlapping splits") {
    write_text(dir / "test.tsv", "a\tr\tb\n");
    CHECK_THROWS_AS(load_graph(dir.path()), DataError);
  }
}

TEST_CASE("duplicate triples are dropped and counted") {
  TempDir dir("dups");
  write_toy(dir.path());
  write_text(dir / "train.tsv", "a\tr\tb\na\tr\tb\nb\tr\ta\n");
  const auto g = load_graph(dir.path());
  CHECK(g.train.size() == 2);
  CHECK(g.duplicates_dropped == 1);
}

TEST_CASE("write_splits reproduces the loaded files byte for byte") {
  TempDir src("rt-src");
  TempDir dst("rt-dst");
  write_text(src / "entity2id.tsv", "x\t0\ny\t1\nz\t2\nw\t3\n");
  write_text(src / "relation2id.tsv", "p\t0\nq\t1\n");
  write_text(src / "train.tsv", "x\tp\ty\ny\tq\tz\nw\tp\tx\n");
  write_text(src / "valid.tsv", "z\tq\tw\n");
  write_text(src / "test.tsv", "x\tq\tw\n");
  write_splits(load_graph(src.path()), dst.path());
  for (const char* f : {"entity2id.tsv", "relation2id.tsv", "train.tsv", "valid.tsv", "test.tsv"}) {
    CAPTURE(f);
    CHECK(read_text(dst / f) == read_text(src / f));
  }
}

TEST_CASE("entities_of and relations_of") {
  CHECK(entities_of(TripleList{}).empty());
  CHECK(relations_of(TripleList{}).empty());
  const TripleList one{{4, 2, 1}};
  CHECK(entities_of(one) == std::vector<EntityId>{1, 4});
  CHECK(relations_of(one) == std::vector<RelationId>{2});
}

TEST_CASE("entities_of distributes over union") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    TripleList a, b;
    const auto na = rng.below(20), nb = rng.below(20);
    auto draw = [&] {
      return Triple{static_cast<EntityId>(rng.below(30)), static_cast<RelationId>(rng.below(4)),
                    static_cast<EntityId>(rng.below(30))};
    };
    for (std::uint64_t i = 0; i < na; ++i) a.push_back(draw());
    for (std::uint64_t i = 0; i < nb; ++i) b.push_back(draw());
    TripleList ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    std::set<EntityId> expect;
    for (auto e : entities_of(a)) expect.insert(e);
    for (auto e : entities_of(b)) expect.insert(e);
    const auto got = entities_of(ab);
    CHECK(std::vector<EntityId>(expect.begin(), expect.end()) == got);
  }
}
