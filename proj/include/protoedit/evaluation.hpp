// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "protoedit/corpus.hpp"
#include "protoedit/tensor.hpp"

namespace protoedit::eval {

using corpus::Utterance;

/// word -> dense vector table. Text format: "word v1 v2 ... vd" per line.
class WordVectors {
 public:
  WordVectors() = default;
  explicit WordVectors(int dim) : dim_(dim) {}

  void set(const std::string& word, Vec<double> v);
  /// nullptr when absent.
  [[nodiscard]] const Vec<double>* find(const std::string& word) const;
  [[nodiscard]] int dim() const { return dim_; }
  [[nodiscard]] std::size_t size() const { return table_.size(); }

  void save(const std::filesystem::path& path) const;
  /// Throws IoError on unreadable files or inconsistent dimensions.
  static WordVectors load(const std::filesystem::path& path);

 private:
  int dim_ = 0;
  std::unordered_map<std::string, Vec<double>> table_;
};

/// Cosine of the mean in-vocabulary word vectors; 0 if a side has none.
double embedding_average(const Utterance& hyp, const Utterance& ref, const WordVectors& wv);
/// Cosine of per-dimension signed max-|value| vectors; 0 if a side has none.
double embedding_extrema(const Utterance& hyp, const Utterance& ref, const WordVectors& wv);
/// Mean over hyp words of the best cosine against ref words, averaged with
/// the reverse direction; 0 if a side has none.
double embedding_greedy(const Utterance& hyp, const Utterance& ref, const WordVectors& wv);
/// One direction of embedding_greedy.
double greedy_direction(const Utterance& from, const Utterance& to, const WordVectors& wv);

/// Unique n-grams / total n-gram tokens across all responses; 0 when there
/// are no n-grams. Throws InvalidArgument if n < 1 or responses is empty.
double distinct_n(std::span<const Utterance> responses, int n);

/// Fraction of responses whose token sequence is absent from the training
/// responses. 0 for an empty response list.
double originality(std::span<const Utterance> responses,
                   std::span<const Utterance> training_responses);

struct MetricReport {
  double average = 0.0;
  double extrema = 0.0;
  double greedy = 0.0;
  double distinct1 = 0.0;
  double distinct2 = 0.0;
  double originality = 0.0;
  std::size_t pairs = 0;
};

void to_json(nlohmann::json& j, const MetricReport& r);
/// Aligned plain-text table.
std::string format_table(const MetricReport& r);

/// Per-pair embedding metrics averaged arithmetically; diversity and
/// originality over all outputs. Throws InvalidArgument when outputs and
/// references differ in length or are empty.
MetricReport evaluate_suite(std::span<const Utterance> outputs,
                            std::span<const Utterance> references,
                            std::span<const Utterance> training_responses,
                            const WordVectors& wv);

struct SkipGramOptions {
  int dim = 100;
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  double lr = 0.025;
  int min_count = 1;
  std::uint64_t seed = 1;
};

/// Skip-gram with negative sampling (unigram^0.75 noise). Deterministic for
/// a fixed seed.
WordVectors train_skipgram(std::span<const Utterance> sentences, const SkipGramOptions& options);

}  // namespace protoedit::eval
