// SPDX-License-Identifier: Apache-2.0
#pragma once

// Context-aware prototype editor: a biGRU encoder over the prototype response,
// an edit vector built from attention over insertion/deletion word embeddings,
// and an attentive GRU decoder whose every input carries the edit vector.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "protoedit/corpus.hpp"
#include "protoedit/gru.hpp"
#include "protoedit/retrieval.hpp"
#include "protoedit/tensor.hpp"

namespace protoedit::editor {

using corpus::WordId;

enum class Ablation { kFull, kInsertOnly, kDeleteOnly, kNone };

std::string_view to_string(Ablation a);
Ablation ablation_from_string(std::string_view s);  // throws InvalidArgument

struct Hyperparams {
  int emb_dim = 512;
  int edit_dim = 512;
  int enc_hidden = 512;  // per direction
  int dec_hidden = 1024;
  int attn_dim = 1024;
  int vocab_size = 30000;
  int batch_size = 128;
  double lr_init = 0.001;
  int beam = 20;
  int max_decode_len = 30;
  double grad_clip_norm = 5.0;
  std::uint64_t seed = 1;
  Ablation ablation = Ablation::kFull;
  int max_epochs = 20;

  [[nodiscard]] int enc_out_dim() const { return 2 * enc_hidden; }
  void validate() const;  // throws InvalidArgument
};

void to_json(nlohmann::json& j, const Hyperparams& hp);
void from_json(const nlohmann::json& j, Hyperparams& hp);

template <class T>
struct ModelParams {
  Mat<T> embedding;  // emb_dim x |V|, one column per word
  GruParams<T> enc_fwd;
  GruParams<T> enc_bwd;
  Mat<T> ins_w;  // attn x (emb + enc_out)
  Vec<T> ins_v;
  Mat<T> del_w;
  Vec<T> del_v;
  Mat<T> edit_w;  // edit_dim x 2·emb
  Vec<T> edit_b;
  Mat<T> bridge_w;  // dec_hidden x enc_out
  Vec<T> bridge_b;
  GruParams<T> dec;  // input emb + edit_dim
  Mat<T> att_w;      // attn x (enc_out + dec_hidden)
  Vec<T> att_v;
  Mat<T> out_w;  // |V| x (emb + dec_hidden + enc_out)
  Vec<T> out_b;

  ModelParams() = default;
  /// All blocks zero.
  explicit ModelParams(const Hyperparams& hp);

  /// Glorot-uniform matrices, zero biases.
  static ModelParams initialized(const Hyperparams& hp, std::uint64_t seed);

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
  [[nodiscard]] std::size_t parameter_count() const;

  template <class U>
  [[nodiscard]] ModelParams<U> cast() const;

 private:
  template <class Self, class F>
  static void visit_impl(Self& s, F& f) {
    f(std::string("embedding"), s.embedding);
    s.enc_fwd.visit("encoder.fwd", f);
    s.enc_bwd.visit("encoder.bwd", f);
    f(std::string("edit.ins_w"), s.ins_w);
    f(std::string("edit.ins_v"), s.ins_v);
    f(std::string("edit.del_w"), s.del_w);
    f(std::string("edit.del_v"), s.del_v);
    f(std::string("edit.w"), s.edit_w);
    f(std::string("edit.b"), s.edit_b);
    f(std::string("bridge.w"), s.bridge_w);
    f(std::string("bridge.b"), s.bridge_b);
    s.dec.visit("decoder", f);
    f(std::string("attention.w"), s.att_w);
    f(std::string("attention.v"), s.att_v);
    f(std::string("output.w"), s.out_w);
    f(std::string("output.b"), s.out_b);
  }
};

/// Word-level insertion/deletion sets: I = C \ C', D = C' \ C over unique
/// words, each in order of first occurrence.
struct WordEditSets {
  std::vector<std::string> insertions;
  std::vector<std::string> deletions;
};

WordEditSets diff_words(const corpus::Utterance& context, const corpus::Utterance& proto_context);

/// Id-level edit sets fed to the model. Words outside the vocabulary are dropped.
struct EditSets {
  std::vector<WordId> insertions;
  std::vector<WordId> deletions;
};

EditSets compute_edit_sets(const corpus::Utterance& context,
                           const corpus::Utterance& proto_context, const corpus::Vocab& vocab);

template <class T>
struct EncoderOutput {
  Mat<T> states;  // enc_out x n, column k = fwd_k ⊕ bwd_k
  Mat<T> keys;    // attn x n, attention projection of each state
  [[nodiscard]] Index length() const { return states.cols(); }
  [[nodiscard]] Vec<T> last() const { return states.col(states.cols() - 1); }
};

template <class T>
struct EditVector {
  Vec<T> z;
  Vec<T> beta;   // over insertions
  Vec<T> gamma;  // over deletions
  Vec<T> diff;   // 2·emb
};

/// Throws InvalidArgument on an empty prototype.
template <class T>
EncoderOutput<T> encode(const ModelParams<T>& p, std::span<const WordId> prototype);

template <class T>
EditVector<T> edit_vector(const ModelParams<T>& p, const EditSets& edits, const Vec<T>& h_last,
                          Ablation ablation);

/// tanh(bridge_w · h_last + bridge_b)
template <class T>
Vec<T> initial_decoder_state(const ModelParams<T>& p, const EncoderOutput<T>& enc);

struct StepMask {
  bool forbid_unk = false;
  bool forbid_eos = false;
};

template <class T>
struct StepResult {
  Vec<T> state;
  Vec<T> log_probs;  // over the vocabulary; masked entries are -inf
  Vec<T> alpha;      // attention over encoder states
};

template <class T>
StepResult<T> decoder_step(const ModelParams<T>& p, const Vec<T>& prev_state, WordId prev_word,
                           const Vec<T>& z, const EncoderOutput<T>& enc, StepMask mask = {});

/// One training instance in id space. The target ends with EOS.
struct Example {
  std::vector<WordId> prototype;
  EditSets edits;
  std::vector<WordId> target;
};

Example make_example(const retrieval::Quadruple& q, const corpus::Vocab& vocab);

/// Sum of token NLLs of `ex` (teacher forcing). When `grad` is non-null, the
/// gradient of scale · (sum of token NLLs) is accumulated into it.
template <class T>
T example_loss(const ModelParams<T>& p, const Example& ex, Ablation ablation,
               ModelParams<T>* grad = nullptr, T scale = T(1));

/// Mean per-token NLL over a batch. Throws InvalidArgument on an empty batch.
template <class T>
T nll(const ModelParams<T>& p, std::span<const Example> batch, Ablation ablation);

/// Gradient of nll() for every parameter block. Returns the loss.
template <class T>
T backward(const ModelParams<T>& p, std::span<const Example> batch, Ablation ablation,
           ModelParams<T>& grad);

/// Encoder + edit vector for one (prototype, edit sets) input.
template <class T>
struct Prepared {
  EncoderOutput<T> enc;
  EditVector<T> edit;
};

template <class T>
Prepared<T> prepare(const ModelParams<T>& p, std::span<const WordId> prototype,
                    const EditSets& edits, Ablation ablation);

}  // namespace protoedit::editor
