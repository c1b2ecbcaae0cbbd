// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <set>

#include "doctest.h"
#include "protoedit/error.hpp"
#include "protoedit/pipeline.hpp"
#include "schema_check.hpp"
#include "temp_dir.hpp"
#include "tiny_artifacts.hpp"

using namespace protoedit;
using namespace protoedit::pipeline;

namespace {

const char* const kContexts[] = {"do you like pizza ?", "i watched tennis last night",
                                 "have you been to paris ?", "my neighbor keeps dogs",
                                 "can you recommend some jazz ?", "hey , is golf hard to learn ?"};

testing::SchemaCheck trace_schema() {
  return testing::SchemaCheck::from_file(std::filesystem::path(PROTOEDIT_SCHEMA_DIR) /
                                         "edit_trace.schema.json");
}

nlohmann::json without_timing(const EditTrace& t) {
  nlohmann::json j = t;
  j.erase("timing_ms");
  return j;
}

struct Fixture {
  testing::TempDir dir;
  PipelineConfig config = testing::write_tiny_artifacts(dir.path());
  Pipeline pipeline{Snapshot::load(config)};
};

}  // namespace

TEST_CASE("snapshots load every artifact and reject mismatched ones") {
  Fixture f;
  const auto& s = f.pipeline.snapshot();
  CHECK(s.pairs.size() == 200);
  CHECK(s.context_index.doc_count() == 200);
  CHECK(s.matcher.has_value());
  CHECK(s.editor_hash.size() == 16);
  CHECK(s.matcher_hash.size() == 16);
  CHECK(s.vocab_hash.size() == 16);

  SUBCASE("missing matcher path loads without a matcher") {
    auto cfg = f.config;
    cfg.matcher_path.clear();
    const auto snap = Snapshot::load(cfg);
    CHECK_FALSE(snap->matcher.has_value());
    CHECK(snap->matcher_hash.empty());
  }
  SUBCASE("checkpoint trained on a different vocabulary") {
    testing::TempDir other;
    const auto other_cfg = testing::write_tiny_artifacts(other.path(), 120);
    auto cfg = f.config;
    cfg.editor_path = other_cfg.editor_path;
    CHECK_THROWS_AS((void)Snapshot::load(cfg), Error);
    cfg = f.config;
    cfg.matcher_path = other_cfg.matcher_path;
    CHECK_THROWS_AS((void)Snapshot::load(cfg), Error);
    cfg = f.config;
    cfg.context_index_path = other_cfg.context_index_path;
    CHECK_THROWS_AS((void)Snapshot::load(cfg), Error);
  }
  SUBCASE("absent files") {
    auto cfg = f.config;
    cfg.editor_path = f.dir / "nope.ckpt";
    CHECK_THROWS_AS((void)Snapshot::load(cfg), IoError);
  }
}

TEST_CASE("every variant returns a schema-valid trace") {
  Fixture f;
  const auto schema = trace_schema();
  for (const auto v : kAllVariants) {
    for (const char* context : kContexts) {
      const auto trace = f.pipeline.run(context, v);
      const nlohmann::json j = trace;
      const auto errors = schema.validate(j);
      INFO(to_string(v), " ", context, " ", j.dump());
      for (const auto& e : errors) INFO(e);
      CHECK(errors.empty());
      CHECK(j.at("variant") == std::string(to_string(v)));
      CHECK_FALSE(trace.fallback);
      REQUIRE(trace.prototype.has_value());
      CHECK_FALSE(trace.candidates.empty());
    }
  }
}

TEST_CASE("identical requests give identical traces") {
  Fixture f;
  Pipeline second(Snapshot::load(f.config));
  for (const auto v : kAllVariants) {
    for (const char* context : kContexts) {
      const auto a = without_timing(f.pipeline.run(context, v));
      CHECK(a == without_timing(f.pipeline.run(context, v)));
      CHECK(a == without_timing(second.run(context, v)));
    }
  }
}

TEST_CASE("a context with no retrievable words falls back") {
  Fixture f;
  for (const auto v : kAllVariants) {
    const auto trace = f.pipeline.run("qqqq zzzz", v);
    CHECK(trace.fallback);
    CHECK(trace.response == f.config.fallback_response);
    CHECK(trace.response_origin == Origin::kRetrieved);
    CHECK_FALSE(trace.prototype.has_value());
    CHECK(trace.candidates.empty());
    CHECK(trace_schema().validate(nlohmann::json(trace)).empty());
  }
}

TEST_CASE("edit-default edits the top retrieved prototype") {
  Fixture f;
  const auto& s = f.pipeline.snapshot();
  for (const char* context : kContexts) {
    const auto ctx = corpus::tokenize(context);
    const auto hits = retrieval::select_prototypes_for_inference(ctx, s.context_index, s.pairs, 1);
    REQUIRE(hits.size() == 1);
    const auto trace = f.pipeline.edit_default(context);
    REQUIRE(trace.prototype.has_value());
    CHECK(trace.prototype->id == hits[0].first->id);
    CHECK(trace.prototype->retrieval_score == doctest::Approx(hits[0].second));
    const auto e = f.pipeline.edit(ctx, *hits[0].first);
    CHECK(trace.response == e.response);
    CHECK(trace.response_log_prob == doctest::Approx(e.log_prob));
    CHECK(trace.response_origin == Origin::kEdited);
    REQUIRE(trace.candidates.size() == 1);
    CHECK(trace.candidates[0].response == e.response);
    // Edit vocabulary words come from the context/prototype-context difference.
    const auto diff = editor::diff_words(ctx, hits[0].first->context);
    CHECK(trace.insertions.size() <= diff.insertions.size());
    CHECK(trace.deletions.size() <= diff.deletions.size());
  }
}

TEST_CASE("edit-1-rerank reranks raw prototypes and edits the winner") {
  Fixture f;
  const auto& s = f.pipeline.snapshot();
  for (const char* context : kContexts) {
    const auto ctx = corpus::tokenize(context);
    const auto hits = retrieval::select_prototypes_for_inference(ctx, s.context_index, s.pairs, 5);
    const auto trace = f.pipeline.edit_1_rerank(context);
    REQUIRE(trace.candidates.size() == hits.size());
    std::multiset<std::string> expected, got;
    for (const auto& [p, _] : hits) expected.insert(corpus::join(p->response));
    for (std::size_t i = 0; i < trace.candidates.size(); ++i) {
      const auto& c = trace.candidates[i];
      got.insert(c.response);
      CHECK(c.origin == Origin::kRetrieved);
      REQUIRE(c.match_score.has_value());
      if (i > 0) CHECK(*trace.candidates[i - 1].match_score >= *c.match_score);
    }
    CHECK(got == expected);
    REQUIRE(trace.prototype.has_value());
    CHECK(trace.prototype->id == trace.candidates[0].prototype_id);
    const auto& proto = s.pairs[trace.prototype->id];
    CHECK(trace.response == f.pipeline.edit(ctx, proto).response);
  }
}

TEST_CASE("edit-n-rerank picks the best scoring edit") {
  Fixture f;
  const auto& s = f.pipeline.snapshot();
  for (const char* context : kContexts) {
    const auto ctx = corpus::tokenize(context);
    const auto trace = f.pipeline.edit_n_rerank(context);
    CHECK(trace.candidates.size() <= 5);
    for (std::size_t i = 0; i < trace.candidates.size(); ++i) {
      const auto& c = trace.candidates[i];
      if (trace.candidates.size() > 1 || c.origin == Origin::kEdited) {
        CHECK(c.origin == Origin::kEdited);
        CHECK(c.response == f.pipeline.edit(ctx, s.pairs[c.prototype_id]).response);
      }
      if (i > 0) CHECK(*trace.candidates[i - 1].match_score >= *c.match_score);
    }
    CHECK(trace.response == trace.candidates[0].response);
    CHECK(trace.prototype->id == trace.candidates[0].prototype_id);
    if (trace.response_origin == Origin::kEdited) {
      CHECK(trace.response_log_prob ==
            doctest::Approx(f.pipeline.edit(ctx, s.pairs[trace.prototype->id]).log_prob));
    }
  }
}

TEST_CASE("edit-merge pools distinct edited and retrieved responses") {
  Fixture f;
  const auto& s = f.pipeline.snapshot();
  for (const char* context : kContexts) {
    const auto ctx = corpus::tokenize(context);
    const auto hits = retrieval::select_prototypes_for_inference(ctx, s.context_index, s.pairs, 5);
    const auto trace = f.pipeline.edit_merge(context);
    std::set<std::string> seen;
    for (const auto& c : trace.candidates) CHECK(seen.insert(c.response).second);
    for (const auto& [p, _] : hits) CHECK(seen.count(corpus::join(p->response)) == 1);
    for (const auto& c : trace.candidates) CHECK(*trace.candidates[0].match_score >= *c.match_score);
    CHECK(trace.response == trace.candidates[0].response);
    if (trace.response_origin == Origin::kRetrieved) CHECK(trace.response_log_prob == 0.0);
  }
}

TEST_CASE("with k = 1 the rerank variants collapse to editing the top hit") {
  Fixture f;
  for (const char* context : kContexts) {
    const auto base = f.pipeline.edit_default(context);
    const auto one = f.pipeline.run(context, Variant::kEdit1Rerank, 1);
    CHECK(one.response == base.response);
    CHECK(one.prototype->id == base.prototype->id);
    const auto n = f.pipeline.run(context, Variant::kEditNRerank, 1);
    if (!base.response.empty()) CHECK(n.response == base.response);
  }
}

TEST_CASE("invalid requests are rejected") {
  Fixture f;
  CHECK_THROWS_AS((void)f.pipeline.run("   "), InvalidArgument);
  CHECK_THROWS_AS((void)f.pipeline.run("hello", Variant::kEditMerge, 0), InvalidArgument);
  auto cfg = f.config;
  cfg.matcher_path.clear();
  Pipeline no_matcher(Snapshot::load(cfg));
  CHECK_NOTHROW((void)no_matcher.edit_default("do you like pizza ?"));
  CHECK_FALSE(no_matcher.edit_default("do you like pizza ?").candidates[0].match_score.has_value());
  CHECK_THROWS_AS((void)no_matcher.edit_merge("do you like pizza ?"), InvalidArgument);
  CHECK_THROWS_AS(variant_from_string("edit-everything"), InvalidArgument);
  for (const auto v : kAllVariants) CHECK(variant_from_string(to_string(v)) == v);
}
