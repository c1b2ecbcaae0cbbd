// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "protoedit/corpus.hpp"
#include "protoedit/decoding.hpp"
#include "protoedit/matcher.hpp"
#include "protoedit/retrieval.hpp"
#include "protoedit/trainer.hpp"

namespace protoedit::pipeline {

using corpus::Pair;
using corpus::PairId;
using corpus::Utterance;

inline constexpr const char* kTraceSchemaVersion = "1.0";

enum class Variant { kEditDefault, kEdit1Rerank, kEditNRerank, kEditMerge };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);  // throws InvalidArgument
inline constexpr Variant kAllVariants[] = {Variant::kEditDefault, Variant::kEdit1Rerank,
                                           Variant::kEditNRerank, Variant::kEditMerge};

struct PipelineConfig {
  Variant variant = Variant::kEditNRerank;
  int k = 20;
  std::filesystem::path pairs_path;
  std::filesystem::path vocab_path;
  std::filesystem::path context_index_path;
  std::filesystem::path editor_path;
  std::filesystem::path matcher_path;  // optional for edit-default
  decoding::BeamConfig beam{{30, true, 1}, 20};
  std::string fallback_response = "i see .";
  bool lowercase = false;

  void validate() const;
};

void to_json(nlohmann::json& j, const PipelineConfig& c);

/// Everything a request reads. Immutable once built.
struct Snapshot {
  PipelineConfig config;
  std::vector<Pair> pairs;
  corpus::Vocab vocab;
  retrieval::InvertedIndex context_index;
  editor::EditorCheckpoint editor;
  std::optional<matcher::MatcherCheckpoint> matcher;
  std::string editor_hash;   // hex digest of the checkpoint file
  std::string matcher_hash;  // empty without a matcher
  std::string vocab_hash;

  /// Loads every artifact named in `config`. Throws on missing or
  /// inconsistent files (e.g. a checkpoint trained on another vocabulary).
  static std::shared_ptr<const Snapshot> load(const PipelineConfig& config);
};

enum class Origin { kEdited, kRetrieved };
std::string_view to_string(Origin o);

struct WeightedWord {
  std::string word;
  double weight = 0.0;
};

struct PrototypeInfo {
  PairId id = 0;
  std::string context;
  std::string response;
  double retrieval_score = 0.0;
};

struct Candidate {
  std::string response;
  Origin origin = Origin::kEdited;
  std::optional<double> match_score;
  PairId prototype_id = 0;
};

struct Timing {
  double retrieval_ms = 0.0;
  double edit_ms = 0.0;
  double rerank_ms = 0.0;
  double total_ms = 0.0;
};

struct EditTrace {
  std::string context;
  Variant variant = Variant::kEditDefault;
  int k = 0;
  bool fallback = false;
  std::optional<PrototypeInfo> prototype;
  std::vector<WeightedWord> insertions;
  std::vector<WeightedWord> deletions;
  std::string response;
  Origin response_origin = Origin::kEdited;
  double response_log_prob = 0.0;  // 0 for retrieved responses
  std::vector<Candidate> candidates;
  Timing timing;
};

void to_json(nlohmann::json& j, const EditTrace& t);

/// Result of editing one prototype against a context.
struct EditResult {
  std::vector<corpus::WordId> tokens;  // EOS stripped
  std::string response;
  double log_prob = 0.0;
  std::vector<WeightedWord> insertions;
  std::vector<WeightedWord> deletions;
};

class Pipeline {
 public:
  explicit Pipeline(std::shared_ptr<const Snapshot> snapshot);

  /// Runs `variant` with `k` retrieved prototypes (defaults from config).
  /// Raises InvalidArgument for an empty context and for rerank variants
  /// without a matcher.
  [[nodiscard]] EditTrace run(std::string_view context, std::optional<Variant> variant = {},
                              std::optional<int> k = {}) const;

  [[nodiscard]] EditTrace edit_default(std::string_view context) const;
  [[nodiscard]] EditTrace edit_1_rerank(std::string_view context) const;
  [[nodiscard]] EditTrace edit_n_rerank(std::string_view context) const;
  [[nodiscard]] EditTrace edit_merge(std::string_view context) const;

  /// Beam-decodes an edit of `prototype` for `context`.
  [[nodiscard]] EditResult edit(const Utterance& context, const Pair& prototype) const;

  [[nodiscard]] const Snapshot& snapshot() const { return *snapshot_; }

 private:
  std::shared_ptr<const Snapshot> snapshot_;
};

}  // namespace protoedit::pipeline
