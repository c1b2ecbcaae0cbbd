// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "protoedit/corpus.hpp"
#include "protoedit/error.hpp"
#include "temp_dir.hpp"

using namespace protoedit;
using namespace protoedit::corpus;

TEST_CASE("tokenize splits on whitespace runs and optionally lowercases") {
  CHECK(tokenize("  Hello \t world  ") == Utterance{"Hello", "world"});
  CHECK(tokenize("   ").empty());
  CHECK(tokenize("A b C", {true}) == Utterance{"a", "b", "c"});
  CHECK(join({"a", "b", "c"}) == "a b c");
  CHECK(join({}).empty());
}

TEST_CASE("parse_pairs reports malformed lines and drops duplicates and long pairs") {
  const std::vector<std::string> lines = {
      "hi there\thello",         // 1 ok
      "no tab here",             // 2 error
      "a\tb\tc",                 // 3 error
      "\tresponse only",         // 4 error
      "context only\t   ",       // 5 error
      "hi   there\thello",       // 6 duplicate after tokenization
      "",                        // 7 blank, ignored
      "one two three four\tok",  // 8 too long at max_len 3
      "how are you\tfine",       // 9 ok
  };
  const auto r = parse_pairs(lines, 3);
  REQUIRE(r.pairs.size() == 2);
  CHECK(r.pairs[0].id == 0);
  CHECK(r.pairs[1].id == 1);
  CHECK(r.pairs[1].context == Utterance{"how", "are", "you"});
  CHECK(r.duplicates == 1);
  CHECK(r.too_long == 1);
  REQUIRE(r.errors.size() == 4);
  CHECK(r.errors[0].line == 2);
  CHECK(r.errors[1].line == 3);
  CHECK(r.errors[2].message == "empty context");
  CHECK(r.errors[3].message == "empty response");
}

TEST_CASE("load_pairs round-trips write_pairs and fails on missing files") {
  testing::TempDir dir;
  const std::vector<Pair> pairs = {{0, {"a", "b"}, {"c"}}, {1, {"d"}, {"e", "f"}}};
  write_pairs(dir / "p.tsv", pairs);
  const auto r = load_pairs(dir / "p.tsv");
  REQUIRE(r.pairs.size() == 2);
  CHECK(r.pairs[1].response == Utterance{"e", "f"});
  CHECK_THROWS_AS(load_pairs(dir / "missing.tsv"), IoError);
}

TEST_CASE("vocabulary is frequency ranked with lexicographic ties after reserved ids") {
  const std::vector<Pair> pairs = {
      {0, {"b", "a", "c"}, {"a", "d"}},
      {1, {"c", "b"}, {"a", "e"}},
  };
  // counts: a 3, b 2, c 2, d 1, e 1
  const auto v = build_vocab(pairs, 7);
  REQUIRE(v.size() == 7);
  CHECK(v.word(Vocab::kPad) == "<pad>");
  CHECK(v.word(Vocab::kEos) == "</s>");
  CHECK(v.word(4) == "a");
  CHECK(v.word(5) == "b");
  CHECK(v.word(6) == "c");
  CHECK(v.id("d") == Vocab::kUnk);
  CHECK_FALSE(v.contains("d"));
  CHECK_THROWS_AS(build_vocab(pairs, 4), InvalidArgument);
  CHECK_THROWS_AS(build_vocab({}, 10), InvalidArgument);
  CHECK_THROWS_AS((void)v.word(7), InvalidArgument);
}

TEST_CASE("vocabulary save and load preserve ids and hash") {
  testing::TempDir dir;
  const std::vector<Pair> pairs = {{0, {"x", "y"}, {"y", "z"}}};
  const auto v = build_vocab(pairs, 100);
  v.save(dir / "vocab.txt");
  const auto w = Vocab::load(dir / "vocab.txt");
  CHECK(w.words() == v.words());
  CHECK(w.hash() == v.hash());
  const auto other = build_vocab(std::vector<Pair>{{0, {"x"}, {"q"}}}, 100);
  CHECK(other.hash() != v.hash());
}

TEST_CASE("encode maps unknown words to UNK and decode inverts known ids") {
  const auto v = build_vocab(std::vector<Pair>{{0, {"hello", "world"}, {"hi"}}}, 100);
  const auto ids = encode({"hello", "mars"}, v, true);
  REQUIRE(ids.size() == 3);
  CHECK(ids[1] == Vocab::kUnk);
  CHECK(ids[2] == Vocab::kEos);
  CHECK(decode(std::vector<WordId>{ids[0]}, v) == Utterance{"hello"});
  CHECK_THROWS_AS(decode(std::vector<WordId>{999}, v), InvalidArgument);
}

TEST_CASE("vocabulary rejects lists without the reserved prefix") {
  CHECK_THROWS_AS(Vocab(std::vector<std::string>{"a", "b"}), InvalidArgument);
  CHECK_THROWS_AS(Vocab(std::vector<std::string>{"<pad>", "<s>", "</s>", "<unk>", "a", "a"}),
                  InvalidArgument);
}
