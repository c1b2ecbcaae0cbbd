// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "protoedit/error.hpp"
#include "protoedit/retrieval.hpp"
#include "temp_dir.hpp"

using namespace protoedit;
using namespace protoedit::retrieval;
using Docs = std::vector<std::pair<PairId, Utterance>>;

namespace {

void check_against_oracle(const InvertedIndex& index, const Docs& docs, const Utterance& query,
                          std::size_t k) {
  const auto got = index.search(query, k);
  const auto want = testing::brute_force_bm25(docs, query, k);
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].doc == want[i].doc);
    CHECK(std::abs(got[i].score - want[i].score) <= 1e-9);
  }
}

}  // namespace

TEST_CASE("jaccard over unique words") {
  CHECK(jaccard({"a", "b"}, {"b", "c"}) == doctest::Approx(1.0 / 3.0));
  CHECK(jaccard({"a", "a", "b"}, {"a", "b"}) == 1.0);
  CHECK(jaccard({}, {}) == 1.0);
  CHECK(jaccard({"a"}, {}) == 0.0);
}

TEST_CASE("idf follows the non-negative Lucene form") {
  const Docs docs = {{0, {"a", "b"}}, {1, {"a"}}, {2, {"c"}}, {3, {"a", "c"}}};
  const auto index = InvertedIndex::build(docs, Side::kContext);
  CHECK(index.idf(3) == doctest::Approx(std::log(1.0 + 1.5 / 3.5)));
  CHECK(index.idf(4) > 0.0);
  CHECK(index.doc_count() == 4);
  CHECK(index.avg_doc_len() == doctest::Approx(1.5));
  CHECK(index.postings("a")->size() == 3);
  CHECK(index.postings("zzz") == nullptr);
  CHECK(index.doc_len(0) == 2);
  CHECK_THROWS_AS((void)index.doc_len(9), InvalidArgument);
}

TEST_CASE("search agrees with a brute-force scan on random corpora") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    std::mt19937_64 rng(seed);
    const auto docs = testing::random_documents(400, 60, 12, rng);
    const auto index = InvertedIndex::build(docs, Side::kResponse);
    for (int q = 0; q < 40; ++q) {
      auto query = testing::random_documents(1, 80, 5, rng).front().second;
      check_against_oracle(index, docs, query, 1 + static_cast<std::size_t>(q % 25));
    }
  }
}

TEST_CASE("search breaks ties by ascending document id") {
  const Docs docs = {{7, {"x", "y"}}, {3, {"x", "y"}}, {5, {"x", "y"}}, {1, {"z"}}};
  const auto index = InvertedIndex::build(docs, Side::kContext);
  const auto hits = index.search({"x"}, 10);
  REQUIRE(hits.size() == 3);
  CHECK(hits[0].doc == 3);
  CHECK(hits[1].doc == 5);
  CHECK(hits[2].doc == 7);
  CHECK(hits[0].score == hits[2].score);
}

TEST_CASE("repeated query terms count once") {
  const Docs docs = {{0, {"x", "y"}}, {1, {"y"}}, {2, {"z"}}};
  const auto index = InvertedIndex::build(docs, Side::kContext);
  const auto once = index.search({"x"}, 5);
  const auto twice = index.search({"x", "x"}, 5);
  REQUIRE(once.size() == twice.size());
  CHECK(once[0].score == twice[0].score);
}

TEST_CASE("search edge cases") {
  const Docs docs = {{0, {"a"}}, {1, {"b"}}};
  const auto index = InvertedIndex::build(docs, Side::kContext);
  CHECK(index.search({"nothing"}, 3).empty());
  CHECK(index.search({}, 3).empty());
  CHECK_THROWS_AS((void)index.search({"a"}, 0), InvalidArgument);
  CHECK_THROWS_AS(InvertedIndex::build(Docs{}, Side::kContext), InvalidArgument);
  CHECK_THROWS_AS(InvertedIndex::build(Docs{{1, {"a"}}, {1, {"b"}}}, Side::kContext),
                  InvalidArgument);
}

TEST_CASE("index files round-trip and reject foreign data") {
  testing::TempDir dir;
  std::mt19937_64 rng(11);
  const auto docs = testing::random_documents(200, 40, 10, rng);
  const auto index = InvertedIndex::build(docs, Side::kResponse);
  index.save(dir / "r.idx");
  const auto loaded = InvertedIndex::load(dir / "r.idx");
  CHECK(loaded.side() == Side::kResponse);
  CHECK(loaded.doc_count() == index.doc_count());
  CHECK(loaded.term_count() == index.term_count());
  for (int q = 0; q < 20; ++q) {
    const auto query = testing::random_documents(1, 40, 4, rng).front().second;
    const auto a = index.search(query, 10);
    const auto b = loaded.search(query, 10);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].doc == b[i].doc);
      CHECK(a[i].score == b[i].score);
    }
  }
  std::ofstream(dir / "junk.idx") << "not an index";
  CHECK_THROWS_AS(InvertedIndex::load(dir / "junk.idx"), IoError);
  CHECK_THROWS_AS(InvertedIndex::load(dir / "absent.idx"), IoError);
}

TEST_CASE("training quadruples lie in the Jaccard band and never pair a response with itself") {
  std::mt19937_64 rng(5);
  const auto ctx = testing::random_documents(300, 30, 8, rng);
  const auto rsp = testing::random_documents(300, 15, 6, rng);
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < ctx.size(); ++i) {
    pairs.push_back({static_cast<PairId>(i), ctx[i].second, rsp[i].second});
  }
  const auto index = InvertedIndex::build(pairs, Side::kResponse);
  QuadrupleOptions opts;
  opts.k = 10;
  const auto quads = build_training_quadruples(pairs, index, opts);
  REQUIRE_FALSE(quads.empty());
  for (const auto& q : quads) {
    CHECK(q.source_id != q.prototype_id);
    const double j = testing::brute_force_jaccard(q.response, q.prototype_response);
    CHECK(j == doctest::Approx(q.jaccard));
    CHECK(j >= 0.3);
    CHECK(j <= 0.7);
    CHECK(q.response == pairs[static_cast<std::size_t>(q.source_id)].response);
    CHECK(q.prototype_context == pairs[static_cast<std::size_t>(q.prototype_id)].context);
  }
  // Every in-band top-k neighbour is present.
  std::size_t expected = 0;
  for (const auto& p : pairs) {
    for (const auto& h : testing::brute_force_bm25(rsp, p.response, opts.k)) {
      if (h.doc == p.id) continue;
      const double j = testing::brute_force_jaccard(p.response, rsp[static_cast<std::size_t>(h.doc)].second);
      if (j >= 0.3 && j <= 0.7) ++expected;
    }
  }
  CHECK(quads.size() == expected);

  testing::TempDir dir;
  write_quadruples(dir / "q.tsv", quads);
  const auto back = read_quadruples(dir / "q.tsv");
  REQUIRE(back.size() == quads.size());
  CHECK(back[0].prototype_response == quads[0].prototype_response);
  CHECK(back[0].jaccard == doctest::Approx(quads[0].jaccard));
  std::ofstream(dir / "bad.tsv") << "only\ttwo\n";
  CHECK_THROWS_AS(read_quadruples(dir / "bad.tsv"), IoError);
}

TEST_CASE("inference prototypes map context hits back to their pairs") {
  const std::vector<Pair> pairs = {{0, {"how", "are", "you"}, {"fine"}},
                                   {1, {"where", "are", "you"}, {"home"}},
                                   {2, {"good", "night"}, {"sleep", "well"}}};
  const auto index = InvertedIndex::build(pairs, Side::kContext);
  const auto hits = select_prototypes_for_inference({"how", "are", "you"}, index, pairs, 2);
  REQUIRE(hits.size() == 2);
  CHECK(hits[0].first == &pairs[0]);
  CHECK(hits[1].first == &pairs[1]);
  CHECK(hits[0].second > hits[1].second);
  CHECK(select_prototypes_for_inference({"unseen"}, index, pairs, 2).empty());
}
