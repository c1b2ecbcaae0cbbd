// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dual recurrent encoder that scores context/response compatibility as
// σ(cᵀ M r), with c and r the final GRU states of each side.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "protoedit/corpus.hpp"
#include "protoedit/gru.hpp"

namespace protoedit::matcher {

using corpus::Utterance;
using corpus::WordId;

struct MatcherHyperparams {
  int emb_dim = 512;
  int hidden = 1024;
  int vocab_size = 30000;
  int batch_size = 128;
  double lr = 0.001;
  int neg_ratio = 9;
  int max_epochs = 10;
  int patience = 2;  // epochs without validation-loss improvement before stopping
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 1;

  void validate() const;
};

void to_json(nlohmann::json& j, const MatcherHyperparams& hp);
void from_json(const nlohmann::json& j, MatcherHyperparams& hp);

template <class T>
struct MatcherParams {
  Mat<T> embedding;  // emb x |V|
  GruParams<T> context_enc;
  GruParams<T> response_enc;
  Mat<T> bilinear;  // hidden x hidden

  MatcherParams() = default;
  explicit MatcherParams(const MatcherHyperparams& hp);
  static MatcherParams initialized(const MatcherHyperparams& hp, std::uint64_t seed);

  template <class F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }
  void set_zero();
  [[nodiscard]] bool all_finite() const;

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    f(std::string("embedding"), s.embedding);
    s.context_enc.visit("context", f);
    s.response_enc.visit("response", f);
    f(std::string("bilinear"), s.bilinear);
  }
};

/// Score in (0, 1) for encoded id sequences. Throws InvalidArgument if
/// either side is empty.
template <class T>
T match_score(const MatcherParams<T>& p, std::span<const WordId> context,
              std::span<const WordId> response);

/// Word-level convenience; OOV words map to UNK.
double match_score(const MatcherParams<float>& p, const corpus::Vocab& vocab,
                   const Utterance& context, const Utterance& response);

struct LabeledExample {
  std::size_t context = 0;   // index into the pair list
  std::size_t response = 0;  // index into the pair list
  bool positive = false;
};

/// One positive per pair followed by `neg_ratio` negatives whose responses
/// come from other pairs, drawn uniformly. A negative never reuses the pair's
/// own index nor a response string identical to the true one (when any
/// alternative exists).
std::vector<LabeledExample> sample_stream(std::span<const corpus::Pair> pairs, int neg_ratio,
                                          std::mt19937_64& rng);

/// Mean binary cross-entropy of a stream; when `grad` is non-null its
/// gradient is accumulated there.
template <class T>
T stream_loss(const MatcherParams<T>& p, std::span<const std::vector<WordId>> contexts,
              std::span<const std::vector<WordId>> responses,
              std::span<const LabeledExample> stream, MatcherParams<T>* grad = nullptr);

struct MatcherEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct MatcherTrainResult {
  MatcherParams<float> params;  // lowest validation loss
  std::vector<MatcherEpoch> log;
  double best_val_loss = 0.0;
  double best_val_accuracy = 0.0;
  std::string stop_reason;
};

/// Adam on BCE over freshly sampled 1:neg_ratio streams each epoch; early
/// stopping on validation loss. Throws DivergenceError on non-finite loss.
MatcherTrainResult train_matcher(std::span<const corpus::Pair> train_pairs,
                                 std::span<const corpus::Pair> validation_pairs,
                                 const corpus::Vocab& vocab, const MatcherHyperparams& hp,
                                 std::function<void(const MatcherEpoch&)> on_epoch = {});

struct StreamMetrics {
  double loss = 0.0;
  double accuracy = 0.0;        // threshold 0.5
  double recall_at_1 = 0.0;     // positive ranked first within its group
};

StreamMetrics evaluate_stream(const MatcherParams<float>& p,
                              std::span<const std::vector<WordId>> contexts,
                              std::span<const std::vector<WordId>> responses,
                              std::span<const LabeledExample> stream);

struct Ranked {
  std::size_t index = 0;  // position in the input list
  double score = 0.0;
};

/// Stable sort of candidates by descending score.
std::vector<Ranked> rerank(const MatcherParams<float>& p, const corpus::Vocab& vocab,
                           const Utterance& context, std::span<const Utterance> candidates);

inline constexpr const char* kMatcherCheckpointKind = "protoedit.matcher";

struct MatcherCheckpoint {
  MatcherHyperparams hp;
  std::uint64_t vocab_hash = 0;
  MatcherParams<float> params;
};

void save_matcher(const std::filesystem::path& path, const MatcherHyperparams& hp,
                  std::uint64_t vocab_hash, const MatcherParams<float>& params);
MatcherCheckpoint load_matcher(const std::filesystem::path& path);

}  // namespace protoedit::matcher
