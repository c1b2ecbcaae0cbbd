// SPDX-License-Identifier: Apache-2.0
#include "protoedit/decoding.hpp"

#include <algorithm>

#include "protoedit/error.hpp"

namespace protoedit::decoding {

using corpus::Vocab;

bool Hypothesis::ends_with_eos() const { return !tokens.empty() && tokens.back() == Vocab::kEos; }

std::vector<WordId> Hypothesis::content() const {
  std::vector<WordId> out = tokens;
  if (ends_with_eos()) out.pop_back();
  return out;
}

namespace {

editor::StepMask mask_for(const DecodeOptions& options, std::size_t produced) {
  return {options.forbid_unk, static_cast<int>(produced) < options.min_len};
}

void validate(const DecodeOptions& options) {
  if (options.max_len < 1) throw InvalidArgument("max_len must be >= 1");
}

struct Candidate {
  std::size_t parent;
  WordId token;
  double log_prob;
};

}  // namespace

std::vector<Hypothesis> beam_search(const ModelParams<float>& params,
                                    const EncoderOutput<float>& enc, const Vec<float>& z,
                                    const BeamConfig& config) {
  if (config.width < 1) throw InvalidArgument("beam width must be >= 1");
  validate(config);
  const auto width = static_cast<std::size_t>(config.width);

  std::vector<Hypothesis> active(1);
  active[0].state = editor::initial_decoder_state<float>(params, enc);
  std::vector<Hypothesis> finished;

  for (int step = 0; step < config.max_len && !active.empty() && finished.size() < width; ++step) {
    std::vector<Candidate> candidates;
    std::vector<Vec<float>> next_states;
    next_states.reserve(active.size());
    for (std::size_t h = 0; h < active.size(); ++h) {
      const Hypothesis& hyp = active[h];
      const WordId prev = hyp.tokens.empty() ? Vocab::kBos : hyp.tokens.back();
      auto r = editor::decoder_step<float>(params, hyp.state, prev, z, enc,
                                           mask_for(config, hyp.tokens.size()));
      for (Index v = 0; v < r.log_probs.size(); ++v) {
        const float lp = r.log_probs(v);
        if (lp == neg_inf<float>()) continue;
        candidates.push_back({h, static_cast<WordId>(v), hyp.log_prob + static_cast<double>(lp)});
      }
      next_states.push_back(std::move(r.state));
    }
    const std::size_t keep = std::min(width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep),
                      candidates.end(), [](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        if (a.parent != b.parent) return a.parent < b.parent;
                        return a.token < b.token;
                      });
    std::vector<Hypothesis> next;
    for (std::size_t i = 0; i < keep; ++i) {
      const Candidate& c = candidates[i];
      Hypothesis hyp;
      hyp.tokens = active[c.parent].tokens;
      hyp.tokens.push_back(c.token);
      hyp.log_prob = c.log_prob;
      hyp.state = next_states[c.parent];
      hyp.finished = c.token == Vocab::kEos || static_cast<int>(hyp.tokens.size()) >= config.max_len;
      (hyp.finished ? finished : next).push_back(std::move(hyp));
    }
    active = std::move(next);
  }
  std::stable_sort(finished.begin(), finished.end(),
                   [](const Hypothesis& a, const Hypothesis& b) { return a.log_prob > b.log_prob; });
  if (finished.size() > width) finished.resize(width);
  return finished;
}

Hypothesis greedy_decode(const ModelParams<float>& params, const EncoderOutput<float>& enc,
                         const Vec<float>& z, const DecodeOptions& options) {
  validate(options);
  Hypothesis hyp;
  hyp.state = editor::initial_decoder_state<float>(params, enc);
  while (!hyp.finished) {
    const WordId prev = hyp.tokens.empty() ? Vocab::kBos : hyp.tokens.back();
    auto r = editor::decoder_step<float>(params, hyp.state, prev, z, enc,
                                         mask_for(options, hyp.tokens.size()));
    Index best = 0;
    r.log_probs.maxCoeff(&best);  // first maximum, i.e. lowest id on ties
    hyp.tokens.push_back(static_cast<WordId>(best));
    hyp.log_prob += static_cast<double>(r.log_probs(best));
    hyp.state = std::move(r.state);
    hyp.finished = best == Vocab::kEos || static_cast<int>(hyp.tokens.size()) >= options.max_len;
  }
  return hyp;
}

std::vector<double> score_tokens(const ModelParams<float>& params,
                                 const EncoderOutput<float>& enc, const Vec<float>& z,
                                 std::span<const WordId> tokens, const DecodeOptions& options) {
  std::vector<double> out;
  out.reserve(tokens.size());
  Vec<float> state = editor::initial_decoder_state<float>(params, enc);
  WordId prev = Vocab::kBos;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto r = editor::decoder_step<float>(params, state, prev, z, enc, mask_for(options, i));
    out.push_back(static_cast<double>(r.log_probs(tokens[i])));
    state = std::move(r.state);
    prev = tokens[i];
  }
  return out;
}

}  // namespace protoedit::decoding
