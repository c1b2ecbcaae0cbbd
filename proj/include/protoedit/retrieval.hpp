// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "protoedit/corpus.hpp"

namespace protoedit::retrieval {

using corpus::Pair;
using corpus::PairId;
using corpus::Utterance;

/// |A ∩ B| / |A ∪ B| over the unique words of each side; 1 when both are empty.
double jaccard(const Utterance& a, const Utterance& b);

enum class Side : std::uint8_t { kContext = 0, kResponse = 1 };

struct Posting {
  PairId doc = 0;
  std::uint32_t tf = 0;
  friend bool operator==(const Posting&, const Posting&) = default;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct RetrievalHit {
  PairId doc = 0;
  double score = 0.0;
};

/// Term-at-a-time BM25 index over one side of a pair collection.
class InvertedIndex {
 public:
  InvertedIndex() = default;

  /// Throws InvalidArgument on an empty document list or a repeated id.
  static InvertedIndex build(std::span<const std::pair<PairId, Utterance>> docs, Side side);
  static InvertedIndex build(std::span<const Pair> pairs, Side side);

  /// Top-k documents by BM25 with OR semantics over the unique query terms.
  /// Descending score, ties by ascending id. Empty or all-unknown query gives [].
  [[nodiscard]] std::vector<RetrievalHit> search(const Utterance& query, std::size_t k,
                                                 const Bm25Params& params = {}) const;

  /// Robertson/Lucene idf, ln(1 + (N - df + 0.5) / (df + 0.5)); never negative.
  [[nodiscard]] double idf(std::size_t df) const;

  [[nodiscard]] const std::vector<Posting>* postings(const std::string& term) const;
  [[nodiscard]] std::uint32_t doc_len(PairId doc) const;
  [[nodiscard]] std::size_t doc_count() const { return doc_len_.size(); }
  [[nodiscard]] double avg_doc_len() const { return avg_doc_len_; }
  [[nodiscard]] Side side() const { return side_; }
  [[nodiscard]] std::size_t term_count() const { return postings_.size(); }
  [[nodiscard]] const std::unordered_map<PairId, std::uint32_t>& doc_lengths() const {
    return doc_len_;
  }

  void save(const std::filesystem::path& path) const;
  static InvertedIndex load(const std::filesystem::path& path);

 private:
  std::unordered_map<std::string, std::vector<Posting>> postings_;
  std::unordered_map<PairId, std::uint32_t> doc_len_;
  double avg_doc_len_ = 0.0;
  Side side_ = Side::kContext;
};

struct Quadruple {
  PairId source_id = 0;
  PairId prototype_id = 0;
  Utterance context;
  Utterance response;
  Utterance prototype_context;
  Utterance prototype_response;
  double jaccard = 0.0;
};

struct QuadrupleOptions {
  std::size_t k = 20;
  double min_jaccard = 0.3;
  double max_jaccard = 0.7;
};

/// For every pair, the top-k response-similar pairs (self excluded) whose
/// response Jaccard lies inside [min_jaccard, max_jaccard]. `pairs[i].id` must
/// match the ids the index was built with.
std::vector<Quadruple> build_training_quadruples(std::span<const Pair> pairs,
                                                 const InvertedIndex& response_index,
                                                 const QuadrupleOptions& options = {});

/// Maps context-side hits back to their pairs.
std::vector<std::pair<const Pair*, double>> select_prototypes_for_inference(
    const Utterance& context, const InvertedIndex& context_index, std::span<const Pair> pairs,
    std::size_t k);

/// "C\tR\tC'\tR'" per line.
void write_quadruples(const std::filesystem::path& path, std::span<const Quadruple> quads);
/// Reads the TSV written above; jaccard is recomputed, ids are left at zero.
std::vector<Quadruple> read_quadruples(const std::filesystem::path& path);

}  // namespace protoedit::retrieval
