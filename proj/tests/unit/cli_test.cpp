// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "protoedit/cli.hpp"
#include "protoedit/corpus.hpp"
#include "protoedit/retrieval.hpp"
#include "run_cli.hpp"
#include "schema_check.hpp"
#include "synthetic_corpus.hpp"
#include "temp_dir.hpp"

using namespace protoedit;
using nlohmann::json;
using testing::run_cli;

namespace {

json small_config(const std::filesystem::path& work_dir) {
  return json{{"work_dir", work_dir.string()},
              {"editor",
               {{"emb_dim", 8}, {"edit_dim", 8}, {"enc_hidden", 8}, {"dec_hidden", 16},
                {"attn_dim", 8}, {"batch_size", 16}, {"beam", 3}, {"max_decode_len", 12}}},
              {"matcher", {{"emb_dim", 8}, {"hidden", 8}, {"batch_size", 32}}},
              {"pipeline", {{"k", 4}}},
              {"eval", {{"skipgram", {{"dim", 8}, {"epochs", 1}}}}}};
}

std::filesystem::path write_config(const testing::TempDir& dir, const json& cfg) {
  const auto path = dir / "config.json";
  std::ofstream(path) << cfg.dump(2);
  return path;
}

}  // namespace

TEST_CASE("argument errors exit nonzero with a message") {
  testing::TempDir dir;
  const auto none = run_cli({}, dir.path());
  CHECK(none.status != 0);
  const auto unknown = run_cli({"frobnicate"}, dir.path());
  CHECK(unknown.status != 0);
  CHECK(unknown.err.find("error") != std::string::npos);
  const auto flag = run_cli({"index", "--no-such-flag"}, dir.path());
  CHECK(flag.status != 0);
  const auto help = run_cli({"--help"}, dir.path());
  CHECK(help.status == 0);
  for (const char* sub : {"ingest", "index", "make-quads", "train", "train-matcher", "eval", "chat", "serve"}) {
    CHECK(help.out.find(sub) != std::string::npos);
  }
}

TEST_CASE("config keys are checked and overridable") {
  testing::TempDir dir;
  const auto defaults = cli::default_config();
  for (const char* section : {"corpus", "quads", "editor", "train", "matcher", "pipeline", "eval", "serve"}) {
    CHECK(defaults.contains(section));
  }
  CHECK(defaults.at("quads").at("min_jaccard") == 0.3);
  CHECK(defaults.at("quads").at("max_jaccard") == 0.7);

  const auto bad_set = run_cli({"--set", "editor.no_such_key=3", "index"}, dir.path());
  CHECK(bad_set.status == 1);
  CHECK(bad_set.err.find("no_such_key") != std::string::npos);

  json cfg = small_config(dir / "work");
  cfg["bogus"] = 1;
  const auto bad_file = run_cli({"--config", write_config(dir, cfg).string(), "index"}, dir.path());
  CHECK(bad_file.status == 1);
  CHECK(bad_file.err.find("bogus") != std::string::npos);

  const auto missing = run_cli({"--work-dir", (dir / "empty").string(), "index"}, dir.path());
  CHECK(missing.status == 1);
  CHECK(missing.err.find("ingest") != std::string::npos);

  const auto no_input = run_cli({"--work-dir", (dir / "w").string(), "ingest"}, dir.path());
  CHECK(no_input.status == 1);
}

TEST_CASE("ingest reports malformed lines and writes pairs and vocabulary") {
  testing::TempDir dir;
  {
    std::ofstream raw(dir / "raw.tsv");
    raw << "hello there\thi .\n"
        << "no tab here\n"
        << "hello there\thi .\n"
        << "how are you ?\tfine , thanks .\n";
  }
  const auto r = run_cli({"--work-dir", (dir / "w").string(), "ingest", "--input", (dir / "raw.tsv").string()},
                         dir.path());
  REQUIRE(r.status == 0);
  CHECK(r.out.find("pairs 2") != std::string::npos);
  CHECK(r.out.find("duplicates 1") != std::string::npos);
  CHECK(r.err.find("raw.tsv:2:") != std::string::npos);
  const auto pairs = corpus::load_pairs(dir / "w" / "pairs.tsv");
  CHECK(pairs.pairs.size() == 2);
  const auto vocab = corpus::Vocab::load(dir / "w" / "vocab.txt");
  CHECK(vocab.contains("thanks"));
}

TEST_CASE("the full command sequence produces servable artifacts") {
  testing::TempDir dir;
  testing::write_synthetic_corpus(dir / "raw.tsv", 400, 5);
  testing::write_synthetic_corpus(dir / "test.tsv", 30, 77);
  const auto config = write_config(dir, small_config(dir / "work")).string();
  auto cli = [&](std::vector<std::string> args, const std::string& input = {}) {
    args.insert(args.begin(), {"--config", config});
    auto r = run_cli(args, dir.path(), input);
    INFO(args[2], "\n", r.err);
    REQUIRE(r.status == 0);
    return r;
  };

  cli({"ingest", "--input", (dir / "raw.tsv").string()});
  CHECK(cli({"index"}).out.find("indexed 400 pairs") != std::string::npos);

  cli({"make-quads", "--k", "10"});
  const auto quads = retrieval::read_quadruples(dir / "work" / "quads.tsv");
  REQUIRE_FALSE(quads.empty());
  for (const auto& q : quads) {
    const double j = testing::brute_force_jaccard(q.response, q.prototype_response);
    CHECK(j >= 0.3);
    CHECK(j <= 0.7);
    CHECK_FALSE((q.context == q.prototype_context && q.response == q.prototype_response));
  }

  cli({"train", "--epochs", "1", "--max-quads", "300"});
  CHECK(std::filesystem::exists(dir / "work" / "editor.ckpt"));
  std::ifstream log(dir / "work" / "train_log.jsonl");
  std::string line;
  REQUIRE(std::getline(log, line));
  CHECK(json::parse(line).at("epoch") == 1);

  cli({"train-matcher", "--epochs", "1"});
  CHECK(std::filesystem::exists(dir / "work" / "matcher.ckpt"));

  SUBCASE("chat prints the prototype, edit words and a schema-valid trace") {
    const auto r = cli({"chat", "--variant", "edit-default"}, "do you like pizza ?\n");
    CHECK(r.out.find("prototype: ") != std::string::npos);
    CHECK(r.out.find("  + pizza") != std::string::npos);
    CHECK(r.out.find("response [edit-default") != std::string::npos);
    const auto brace = r.out.find('{');
    REQUIRE(brace != std::string::npos);
    const auto trace = json::parse(r.out.substr(brace));
    const auto schema = testing::SchemaCheck::from_file(std::filesystem::path(PROTOEDIT_SCHEMA_DIR) /
                                                        "edit_trace.schema.json");
    CHECK(schema.validate(trace).empty());
    const auto brief = cli({"chat", "--brief", "--variant", "edit-merge"}, "i am learning piano\n\nhave you been to rome ?\n");
    CHECK(brief.out.find('{') == std::string::npos);
    CHECK(std::count(brief.out.begin(), brief.out.end(), '\n') >= 2);
  }

  SUBCASE("eval writes outputs and a metrics report") {
    const auto r = cli({"eval", "--test", (dir / "test.tsv").string(), "--limit", "20", "--variant", "edit-1-rerank"});
    CHECK(r.out.find("Distinct-1") != std::string::npos);
    std::ifstream report_in(dir / "work" / "report.json");
    const auto report = json::parse(report_in);
    CHECK(report.at("pairs") == 20);
    CHECK(report.at("variant") == "edit-1-rerank");
    for (const char* key : {"average", "extrema", "greedy", "distinct1", "distinct2", "originality"}) {
      CHECK(report.at(key).is_number());
    }
    std::ifstream outputs(dir / "work" / "outputs.txt");
    int n = 0;
    while (std::getline(outputs, line)) ++n;
    CHECK(n == 20);
    CHECK(std::filesystem::exists(dir / "work" / "word_vectors.txt"));
  }
}
