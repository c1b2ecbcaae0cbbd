// SPDX-License-Identifier: Apache-2.0
#pragma once

// Exhaustive enumeration of every output sequence a decoder can emit, used
// as ground truth for beam search on tiny vocabularies.

#include <algorithm>
#include <functional>
#include <limits>
#include <vector>

#include "protoedit/decoding.hpp"

namespace protoedit::testing {

struct Enumerated {
  std::vector<corpus::WordId> tokens;
  double log_prob = 0.0;
};

/// Every sequence that ends in EOS within max_len tokens, plus every EOS-free
/// sequence of exactly max_len tokens, scored by chaining decoder steps.
/// Masked tokens (log-prob -inf) are never extended.
inline std::vector<Enumerated> enumerate_outputs(const editor::ModelParams<float>& p,
                                                 const editor::EncoderOutput<float>& enc,
                                                 const Vec<float>& z,
                                                 const decoding::DecodeOptions& options) {
  std::vector<Enumerated> out;
  std::function<void(std::vector<corpus::WordId>&, double, const Vec<float>&)> walk =
      [&](std::vector<corpus::WordId>& prefix, double lp, const Vec<float>& state) {
        const auto prev = prefix.empty() ? corpus::Vocab::kBos : prefix.back();
        editor::StepMask mask{options.forbid_unk,
                              static_cast<int>(prefix.size()) < options.min_len};
        const auto r = editor::decoder_step<float>(p, state, prev, z, enc, mask);
        for (Index v = 0; v < r.log_probs.size(); ++v) {
          const float step = r.log_probs(v);
          if (step == -std::numeric_limits<float>::infinity()) continue;
          prefix.push_back(static_cast<corpus::WordId>(v));
          const double total = lp + static_cast<double>(step);
          if (v == corpus::Vocab::kEos || static_cast<int>(prefix.size()) == options.max_len) {
            out.push_back({prefix, total});
          } else {
            walk(prefix, total, r.state);
          }
          prefix.pop_back();
        }
      };
  std::vector<corpus::WordId> prefix;
  walk(prefix, 0.0, editor::initial_decoder_state<float>(p, enc));
  std::stable_sort(out.begin(), out.end(),
                   [](const Enumerated& a, const Enumerated& b) { return a.log_prob > b.log_prob; });
  return out;
}

}  // namespace protoedit::testing
