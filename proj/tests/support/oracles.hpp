// SPDX-License-Identifier: Apache-2.0
#pragma once

// Slow, obviously-correct reference implementations used to cross-check the
// library. None of these share code with src/.

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "protoedit/corpus.hpp"

namespace protoedit::testing {

struct ScoredDoc {
  corpus::PairId doc;
  double score;
};

/// Scores every document against the query from raw token lists.
inline std::vector<ScoredDoc> brute_force_bm25(
    const std::vector<std::pair<corpus::PairId, corpus::Utterance>>& docs,
    const corpus::Utterance& query, std::size_t k, double k1 = 1.2, double b = 0.75) {
  const double n = static_cast<double>(docs.size());
  double total_len = 0.0;
  for (const auto& d : docs) total_len += static_cast<double>(d.second.size());
  const double avgdl = total_len / n;

  // Unique terms in first-occurrence order, so floating-point sums line up
  // term for term with any implementation that walks the query left to right.
  std::vector<std::string> terms;
  for (const auto& t : query) {
    if (std::find(terms.begin(), terms.end(), t) == terms.end()) terms.push_back(t);
  }
  std::map<std::string, double> idf;
  for (const auto& t : terms) {
    double df = 0.0;
    for (const auto& d : docs) {
      if (std::find(d.second.begin(), d.second.end(), t) != d.second.end()) df += 1.0;
    }
    idf[t] = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
  }

  std::vector<ScoredDoc> scored;
  for (const auto& [id, tokens] : docs) {
    double s = 0.0;
    bool matched = false;
    const double dl = static_cast<double>(tokens.size());
    for (const auto& t : terms) {
      const double tf = static_cast<double>(std::count(tokens.begin(), tokens.end(), t));
      if (tf == 0.0) continue;
      matched = true;
      s += idf[t] * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * dl / avgdl));
    }
    if (matched) scored.push_back({id, s});
  }
  std::sort(scored.begin(), scored.end(), [](const ScoredDoc& x, const ScoredDoc& y) {
    if (x.score != y.score) return x.score > y.score;
    return x.doc < y.doc;
  });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

/// Random documents over a Zipf-like vocabulary "w0".."w{V-1}".
inline std::vector<std::pair<corpus::PairId, corpus::Utterance>> random_documents(
    std::size_t n, std::size_t vocab, std::size_t max_len, std::mt19937_64& rng) {
  std::vector<double> weights(vocab);
  for (std::size_t i = 0; i < vocab; ++i) weights[i] = 1.0 / static_cast<double>(i + 1);
  std::discrete_distribution<std::size_t> word(weights.begin(), weights.end());
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::vector<std::pair<corpus::PairId, corpus::Utterance>> docs;
  docs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    corpus::Utterance u;
    const auto l = len(rng);
    for (std::size_t j = 0; j < l; ++j) u.push_back("w" + std::to_string(word(rng)));
    docs.emplace_back(static_cast<corpus::PairId>(i), std::move(u));
  }
  return docs;
}

/// distinct-n by listing every n-gram occurrence.
inline double brute_force_distinct(const std::vector<corpus::Utterance>& responses, int n) {
  std::vector<std::vector<std::string>> grams;
  for (const auto& r : responses) {
    for (int i = 0; i + n <= static_cast<int>(r.size()); ++i) {
      grams.emplace_back(r.begin() + i, r.begin() + i + n);
    }
  }
  if (grams.empty()) return 0.0;
  std::vector<std::vector<std::string>> unique;
  for (const auto& g : grams) {
    if (std::find(unique.begin(), unique.end(), g) == unique.end()) unique.push_back(g);
  }
  return static_cast<double>(unique.size()) / static_cast<double>(grams.size());
}

/// Fraction of responses with no identical token sequence among the training responses.
inline double brute_force_originality(const std::vector<corpus::Utterance>& responses,
                                      const std::vector<corpus::Utterance>& training) {
  if (responses.empty()) return 0.0;
  std::size_t novel = 0;
  for (const auto& r : responses) {
    bool found = false;
    for (const auto& t : training) found = found || t == r;
    if (!found) ++novel;
  }
  return static_cast<double>(novel) / static_cast<double>(responses.size());
}

inline double brute_force_jaccard(const corpus::Utterance& a, const corpus::Utterance& b) {
  std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& w : sa) inter += sb.count(w);
  return static_cast<double>(inter) / static_cast<double>(sa.size() + sb.size() - inter);
}

}  // namespace protoedit::testing
