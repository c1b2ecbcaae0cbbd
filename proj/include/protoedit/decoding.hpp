// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "protoedit/editor.hpp"

namespace protoedit::decoding {

using corpus::WordId;
using editor::EncoderOutput;
using editor::ModelParams;

struct DecodeOptions {
  int max_len = 30;        // tokens, EOS included
  bool forbid_unk = true;  // UNK logit set to -inf before normalization
  int min_len = 0;         // EOS masked while fewer tokens than this exist
};

struct BeamConfig : DecodeOptions {
  int width = 20;
};

struct Hypothesis {
  std::vector<WordId> tokens;  // no BOS; ends with EOS unless max_len was hit
  double log_prob = 0.0;
  Vec<float> state;
  bool finished = false;

  [[nodiscard]] bool ends_with_eos() const;
  /// Tokens with a trailing EOS removed.
  [[nodiscard]] std::vector<WordId> content() const;
};

/// Standard beam search with unnormalized cumulative log-probability.
/// Finished hypotheses are set aside; search stops once `width` of them exist
/// or no active hypotheses remain. Returns at most `width` hypotheses, best
/// first. Ties are broken by parent rank, then token id.
/// Throws InvalidArgument when width < 1 or max_len < 1.
std::vector<Hypothesis> beam_search(const ModelParams<float>& params,
                                    const EncoderOutput<float>& enc, const Vec<float>& z,
                                    const BeamConfig& config);

/// Argmax token per step until EOS or max_len; lowest id wins ties.
Hypothesis greedy_decode(const ModelParams<float>& params, const EncoderOutput<float>& enc,
                         const Vec<float>& z, const DecodeOptions& options);

/// Per-step log-probabilities of `tokens` under teacher forcing with the same
/// masking rules as the decoders.
std::vector<double> score_tokens(const ModelParams<float>& params,
                                 const EncoderOutput<float>& enc, const Vec<float>& z,
                                 std::span<const WordId> tokens, const DecodeOptions& options);

}  // namespace protoedit::decoding
