// SPDX-License-Identifier: Apache-2.0
#include "protoedit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <unordered_set>

#include "protoedit/error.hpp"

namespace protoedit::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::uint64_t h = 1469598103934665603ULL;
  char buf[1 << 16];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  return hex64(h);
}

void require_file(const std::filesystem::path& p, const char* what) {
  if (p.empty()) throw InvalidArgument(std::string("no ") + what + " path configured");
  if (!std::filesystem::exists(p)) throw IoError(std::string(what) + " not found: " + p.string());
}

}  // namespace

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::kEditDefault: return "edit-default";
    case Variant::kEdit1Rerank: return "edit-1-rerank";
    case Variant::kEditNRerank: return "edit-n-rerank";
    case Variant::kEditMerge: return "edit-merge";
  }
  return "edit-default";
}

Variant variant_from_string(std::string_view s) {
  for (auto v : kAllVariants)
    if (to_string(v) == s) return v;
  throw InvalidArgument("unknown pipeline variant '" + std::string(s) + "'");
}

std::string_view to_string(Origin o) { return o == Origin::kEdited ? "edited" : "retrieved"; }

void PipelineConfig::validate() const {
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (beam.width < 1) throw InvalidArgument("beam width must be >= 1");
  if (beam.max_len < 1) throw InvalidArgument("max decode length must be >= 1");
}

void to_json(nlohmann::json& j, const PipelineConfig& c) {
  j = nlohmann::json{{"variant", std::string(to_string(c.variant))},
                     {"k", c.k},
                     {"pairs_path", c.pairs_path.string()},
                     {"vocab_path", c.vocab_path.string()},
                     {"context_index_path", c.context_index_path.string()},
                     {"editor_path", c.editor_path.string()},
                     {"matcher_path", c.matcher_path.string()},
                     {"beam",
                      {{"width", c.beam.width},
                       {"max_len", c.beam.max_len},
                       {"min_len", c.beam.min_len},
                       {"forbid_unk", c.beam.forbid_unk}}},
                     {"fallback_response", c.fallback_response},
                     {"lowercase", c.lowercase}};
}

std::shared_ptr<const Snapshot> Snapshot::load(const PipelineConfig& config) {
  config.validate();
  require_file(config.pairs_path, "pair corpus");
  require_file(config.vocab_path, "vocabulary");
  require_file(config.context_index_path, "context index");
  require_file(config.editor_path, "editor checkpoint");

  auto s = std::make_shared<Snapshot>();
  s->config = config;
  corpus::TokenizerOptions tok{config.lowercase};
  // The stored corpus is already filtered; re-reading must not drop anything.
  auto loaded = corpus::load_pairs(config.pairs_path, std::numeric_limits<std::size_t>::max(), tok);
  if (!loaded.errors.empty()) {
    throw IoError(config.pairs_path.string() + ":" + std::to_string(loaded.errors.front().line) +
                  ": " + loaded.errors.front().message);
  }
  s->pairs = std::move(loaded.pairs);
  s->vocab = corpus::Vocab::load(config.vocab_path);
  s->vocab_hash = hex64(s->vocab.hash());
  s->context_index = retrieval::InvertedIndex::load(config.context_index_path);
  if (s->context_index.side() != retrieval::Side::kContext) {
    throw IoError(config.context_index_path.string() + " is not a context-side index");
  }
  if (s->context_index.doc_count() != s->pairs.size()) {
    throw IoError("context index covers " + std::to_string(s->context_index.doc_count()) +
                  " documents but the corpus has " + std::to_string(s->pairs.size()) + " pairs");
  }
  s->editor = editor::load_editor(config.editor_path);
  if (s->editor.vocab_hash != s->vocab.hash()) {
    throw IoError("editor checkpoint was trained with a different vocabulary");
  }
  if (static_cast<std::size_t>(s->editor.hp.vocab_size) != s->vocab.size()) {
    throw IoError("editor vocabulary size does not match the vocabulary file");
  }
  s->editor_hash = file_digest(config.editor_path);
  if (!config.matcher_path.empty()) {
    require_file(config.matcher_path, "matcher checkpoint");
    s->matcher = matcher::load_matcher(config.matcher_path);
    if (s->matcher->vocab_hash != s->vocab.hash()) {
      throw IoError("matcher checkpoint was trained with a different vocabulary");
    }
    s->matcher_hash = file_digest(config.matcher_path);
  }
  return s;
}

void to_json(nlohmann::json& j, const EditTrace& t) {
  auto words = [](const std::vector<WeightedWord>& ws) {
    auto arr = nlohmann::json::array();
    for (const auto& w : ws) arr.push_back({{"word", w.word}, {"weight", w.weight}});
    return arr;
  };
  auto candidates = nlohmann::json::array();
  for (const auto& c : t.candidates) {
    candidates.push_back({{"response", c.response},
                          {"origin", std::string(to_string(c.origin))},
                          {"match_score", c.match_score ? nlohmann::json(*c.match_score)
                                                        : nlohmann::json(nullptr)},
                          {"prototype_id", c.prototype_id}});
  }
  nlohmann::json proto = nullptr;
  if (t.prototype) {
    proto = {{"id", t.prototype->id},
             {"context", t.prototype->context},
             {"response", t.prototype->response},
             {"retrieval_score", t.prototype->retrieval_score}};
  }
  j = nlohmann::json{{"schema_version", kTraceSchemaVersion},
                     {"context", t.context},
                     {"variant", std::string(to_string(t.variant))},
                     {"k", t.k},
                     {"fallback", t.fallback},
                     {"prototype", proto},
                     {"insertions", words(t.insertions)},
                     {"deletions", words(t.deletions)},
                     {"response", t.response},
                     {"response_origin", std::string(to_string(t.response_origin))},
                     {"response_log_prob", t.response_log_prob},
                     {"candidates", candidates},
                     {"timing_ms",
                      {{"retrieval", t.timing.retrieval_ms},
                       {"edit", t.timing.edit_ms},
                       {"rerank", t.timing.rerank_ms},
                       {"total", t.timing.total_ms}}}};
}

Pipeline::Pipeline(std::shared_ptr<const Snapshot> snapshot) : snapshot_(std::move(snapshot)) {
  if (!snapshot_) throw InvalidArgument("pipeline needs a snapshot");
}

EditResult Pipeline::edit(const Utterance& context, const Pair& prototype) const {
  const auto& s = *snapshot_;
  const auto& vocab = s.vocab;
  const auto proto_ids = corpus::encode(prototype.response, vocab);
  const auto edits = editor::compute_edit_sets(context, prototype.context, vocab);
  const auto prepared = editor::prepare<float>(s.editor.params, proto_ids, edits, s.editor.hp.ablation);
  auto hyps = decoding::beam_search(s.editor.params, prepared.enc, prepared.edit.z, s.config.beam);

  EditResult out;
  if (!hyps.empty()) {
    out.tokens = hyps.front().content();
    out.log_prob = hyps.front().log_prob;
  }
  out.response = corpus::join(corpus::decode(out.tokens, vocab));
  for (std::size_t i = 0; i < edits.insertions.size(); ++i) {
    out.insertions.push_back({vocab.word(edits.insertions[i]),
                              static_cast<double>(prepared.edit.beta(static_cast<Index>(i)))});
  }
  for (std::size_t i = 0; i < edits.deletions.size(); ++i) {
    out.deletions.push_back({vocab.word(edits.deletions[i]),
                             static_cast<double>(prepared.edit.gamma(static_cast<Index>(i)))});
  }
  return out;
}

namespace {

struct Retrieved {
  std::vector<std::pair<const Pair*, double>> hits;
  Utterance context;
};

PrototypeInfo info(const Pair& p, double score) {
  return {p.id, corpus::join(p.context), corpus::join(p.response), score};
}

}  // namespace

EditTrace Pipeline::run(std::string_view context, std::optional<Variant> variant,
                        std::optional<int> k) const {
  const auto started = Clock::now();
  const auto& s = *snapshot_;
  const Variant v = variant.value_or(s.config.variant);
  const int top_k = k.value_or(s.config.k);
  if (top_k < 1) throw InvalidArgument("k must be >= 1");
  const Utterance ctx = corpus::tokenize(context, {s.config.lowercase});
  if (ctx.empty()) throw InvalidArgument("context is empty");
  if (v != Variant::kEditDefault && !s.matcher) {
    throw InvalidArgument(std::string(to_string(v)) + " needs a matcher checkpoint");
  }

  EditTrace trace;
  trace.context = corpus::join(ctx);
  trace.variant = v;
  trace.k = top_k;

  auto t = Clock::now();
  const std::size_t retrieve = v == Variant::kEditDefault ? 1 : static_cast<std::size_t>(top_k);
  const auto hits = retrieval::select_prototypes_for_inference(ctx, s.context_index, s.pairs, retrieve);
  trace.timing.retrieval_ms = ms_since(t);

  if (hits.empty()) {
    trace.fallback = true;
    trace.response = s.config.fallback_response;
    trace.response_origin = Origin::kRetrieved;
    trace.timing.total_ms = ms_since(started);
    return trace;
  }

  auto score = [&](const Utterance& response) -> std::optional<double> {
    if (!s.matcher || response.empty()) return std::nullopt;
    return matcher::match_score(s.matcher->params, s.vocab, ctx, response);
  };
  auto adopt = [&](const Pair& proto, double retrieval_score, const EditResult& e) {
    trace.prototype = info(proto, retrieval_score);
    trace.insertions = e.insertions;
    trace.deletions = e.deletions;
  };

  switch (v) {
    case Variant::kEditDefault: {
      const auto& [proto, rscore] = hits.front();
      t = Clock::now();
      const auto e = edit(ctx, *proto);
      trace.timing.edit_ms = ms_since(t);
      adopt(*proto, rscore, e);
      trace.response = e.response;
      trace.response_log_prob = e.log_prob;
      t = Clock::now();
      trace.candidates.push_back({e.response, Origin::kEdited, score(corpus::tokenize(e.response)), proto->id});
      trace.timing.rerank_ms = ms_since(t);
      break;
    }
    case Variant::kEdit1Rerank: {
      t = Clock::now();
      std::vector<Utterance> responses;
      for (const auto& [p, _] : hits) responses.push_back(p->response);
      const auto ranked = matcher::rerank(s.matcher->params, s.vocab, ctx, responses);
      for (const auto& r : ranked) {
        trace.candidates.push_back({corpus::join(responses[r.index]), Origin::kRetrieved, r.score,
                                    hits[r.index].first->id});
      }
      trace.timing.rerank_ms = ms_since(t);
      const auto& [proto, rscore] = hits[ranked.front().index];
      t = Clock::now();
      const auto e = edit(ctx, *proto);
      trace.timing.edit_ms = ms_since(t);
      adopt(*proto, rscore, e);
      trace.response = e.response;
      trace.response_log_prob = e.log_prob;
      break;
    }
    case Variant::kEditNRerank:
    case Variant::kEditMerge: {
      t = Clock::now();
      std::vector<EditResult> edits;
      edits.reserve(hits.size());
      for (const auto& [p, _] : hits) edits.push_back(edit(ctx, *p));
      trace.timing.edit_ms = ms_since(t);

      struct PoolEntry {
        Utterance tokens;
        Origin origin;
        std::size_t hit;
      };
      std::vector<PoolEntry> pool;
      std::unordered_set<std::string> seen;
      for (std::size_t i = 0; i < edits.size(); ++i) {
        if (edits[i].tokens.empty()) continue;
        if (v == Variant::kEditMerge && !seen.insert(edits[i].response).second) continue;
        pool.push_back({corpus::tokenize(edits[i].response), Origin::kEdited, i});
      }
      if (v == Variant::kEditMerge) {
        for (std::size_t i = 0; i < hits.size(); ++i) {
          const auto& r = hits[i].first->response;
          if (!seen.insert(corpus::join(r)).second) continue;
          pool.push_back({r, Origin::kRetrieved, i});
        }
      }
      if (pool.empty()) {
        // Every edit decoded to nothing; fall back to the best raw prototype.
        pool.push_back({hits.front().first->response, Origin::kRetrieved, 0});
      }
      t = Clock::now();
      std::vector<Utterance> responses;
      for (const auto& e : pool) responses.push_back(e.tokens);
      const auto ranked = matcher::rerank(s.matcher->params, s.vocab, ctx, responses);
      for (const auto& r : ranked) {
        const auto& e = pool[r.index];
        trace.candidates.push_back({corpus::join(e.tokens), e.origin, r.score, hits[e.hit].first->id});
      }
      trace.timing.rerank_ms = ms_since(t);
      const auto& best = pool[ranked.front().index];
      const auto& [proto, rscore] = hits[best.hit];
      adopt(*proto, rscore, edits[best.hit]);
      trace.response = corpus::join(best.tokens);
      trace.response_origin = best.origin;
      trace.response_log_prob = best.origin == Origin::kEdited ? edits[best.hit].log_prob : 0.0;
      break;
    }
  }
  trace.timing.total_ms = ms_since(started);
  return trace;
}

EditTrace Pipeline::edit_default(std::string_view context) const {
  return run(context, Variant::kEditDefault);
}
EditTrace Pipeline::edit_1_rerank(std::string_view context) const {
  return run(context, Variant::kEdit1Rerank);
}
EditTrace Pipeline::edit_n_rerank(std::string_view context) const {
  return run(context, Variant::kEditNRerank);
}
EditTrace Pipeline::edit_merge(std::string_view context) const {
  return run(context, Variant::kEditMerge);
}

}  // namespace protoedit::pipeline
