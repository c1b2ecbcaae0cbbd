// SPDX-License-Identifier: Apache-2.0
#include "protoedit/editor.hpp"

#include <random>
#include <unordered_set>

#include "protoedit/error.hpp"

namespace protoedit::editor {

using corpus::Vocab;

std::string_view to_string(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kInsertOnly: return "ins_only";
    case Ablation::kDeleteOnly: return "del_only";
    case Ablation::kNone: return "none";
  }
  return "full";
}

Ablation ablation_from_string(std::string_view s) {
  if (s == "full") return Ablation::kFull;
  if (s == "ins_only") return Ablation::kInsertOnly;
  if (s == "del_only") return Ablation::kDeleteOnly;
  if (s == "none") return Ablation::kNone;
  throw InvalidArgument("unknown ablation '" + std::string(s) + "'");
}

void Hyperparams::validate() const {
  if (emb_dim < 1 || edit_dim < 1 || enc_hidden < 1 || dec_hidden < 1 || attn_dim < 1) {
    throw InvalidArgument("all model dimensions must be >= 1");
  }
  if (vocab_size < 1) throw InvalidArgument("vocab_size must be >= 1");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(lr_init > 0)) throw InvalidArgument("lr_init must be > 0");
  if (beam < 1) throw InvalidArgument("beam must be >= 1");
  if (max_decode_len < 1) throw InvalidArgument("max_decode_len must be >= 1");
  if (!(grad_clip_norm > 0)) throw InvalidArgument("grad_clip_norm must be > 0");
  if (max_epochs < 1) throw InvalidArgument("max_epochs must be >= 1");
}

void to_json(nlohmann::json& j, const Hyperparams& hp) {
  j = nlohmann::json{{"emb_dim", hp.emb_dim},
                     {"edit_dim", hp.edit_dim},
                     {"enc_hidden", hp.enc_hidden},
                     {"dec_hidden", hp.dec_hidden},
                     {"attn_dim", hp.attn_dim},
                     {"vocab_size", hp.vocab_size},
                     {"batch_size", hp.batch_size},
                     {"lr_init", hp.lr_init},
                     {"beam", hp.beam},
                     {"max_decode_len", hp.max_decode_len},
                     {"grad_clip_norm", hp.grad_clip_norm},
                     {"seed", hp.seed},
                     {"ablation", std::string(to_string(hp.ablation))},
                     {"max_epochs", hp.max_epochs}};
}

void from_json(const nlohmann::json& j, Hyperparams& hp) {
  Hyperparams d;
  hp.emb_dim = j.value("emb_dim", d.emb_dim);
  hp.edit_dim = j.value("edit_dim", d.edit_dim);
  hp.enc_hidden = j.value("enc_hidden", d.enc_hidden);
  hp.dec_hidden = j.value("dec_hidden", d.dec_hidden);
  hp.attn_dim = j.value("attn_dim", d.attn_dim);
  hp.vocab_size = j.value("vocab_size", d.vocab_size);
  hp.batch_size = j.value("batch_size", d.batch_size);
  hp.lr_init = j.value("lr_init", d.lr_init);
  hp.beam = j.value("beam", d.beam);
  hp.max_decode_len = j.value("max_decode_len", d.max_decode_len);
  hp.grad_clip_norm = j.value("grad_clip_norm", d.grad_clip_norm);
  hp.seed = j.value("seed", d.seed);
  hp.ablation = ablation_from_string(j.value("ablation", std::string("full")));
  hp.max_epochs = j.value("max_epochs", d.max_epochs);
}

// ---------------------------------------------------------------------------
// Parameters

template <class T>
ModelParams<T>::ModelParams(const Hyperparams& hp) {
  hp.validate();
  const Index E = hp.emb_dim, V = hp.vocab_size, He = hp.enc_hidden, Eo = hp.enc_out_dim(),
              A = hp.attn_dim, Z = hp.edit_dim, Hd = hp.dec_hidden;
  embedding = Mat<T>::Zero(E, V);
  enc_fwd = GruParams<T>(E, He);
  enc_bwd = GruParams<T>(E, He);
  ins_w = Mat<T>::Zero(A, E + Eo);
  ins_v = Vec<T>::Zero(A);
  del_w = Mat<T>::Zero(A, E + Eo);
  del_v = Vec<T>::Zero(A);
  edit_w = Mat<T>::Zero(Z, 2 * E);
  edit_b = Vec<T>::Zero(Z);
  bridge_w = Mat<T>::Zero(Hd, Eo);
  bridge_b = Vec<T>::Zero(Hd);
  dec = GruParams<T>(E + Z, Hd);
  att_w = Mat<T>::Zero(A, Eo + Hd);
  att_v = Vec<T>::Zero(A);
  out_w = Mat<T>::Zero(V, E + Hd + Eo);
  out_b = Vec<T>::Zero(V);
}

template <class T>
ModelParams<T> ModelParams<T>::initialized(const Hyperparams& hp, std::uint64_t seed) {
  ModelParams p(hp);
  std::mt19937_64 rng(seed);
  p.visit([&](const std::string&, auto& block) {
    if (block.cols() > 1) glorot_uniform(block, rng);
  });
  // Attention scoring vectors are column blocks too; give them the matrix init.
  glorot_uniform(p.ins_v, rng);
  glorot_uniform(p.del_v, rng);
  glorot_uniform(p.att_v, rng);
  return p;
}

template <class T>
void ModelParams<T>::set_zero() {
  visit([](const std::string&, auto& block) { block.setZero(); });
}

template <class T>
bool ModelParams<T>::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const auto& block) { ok = ok && block.allFinite(); });
  return ok;
}

template <class T>
std::size_t ModelParams<T>::parameter_count() const {
  std::size_t n = 0;
  visit([&](const std::string&, const auto& block) { n += static_cast<std::size_t>(block.size()); });
  return n;
}

template <class T>
template <class U>
ModelParams<U> ModelParams<T>::cast() const {
  ModelParams<U> out;
  auto gru = [](const GruParams<T>& g) {
    GruParams<U> r;
    r.w = g.w.template cast<U>();
    r.u = g.u.template cast<U>();
    r.b = g.b.template cast<U>();
    return r;
  };
  out.embedding = embedding.template cast<U>();
  out.enc_fwd = gru(enc_fwd);
  out.enc_bwd = gru(enc_bwd);
  out.ins_w = ins_w.template cast<U>();
  out.ins_v = ins_v.template cast<U>();
  out.del_w = del_w.template cast<U>();
  out.del_v = del_v.template cast<U>();
  out.edit_w = edit_w.template cast<U>();
  out.edit_b = edit_b.template cast<U>();
  out.bridge_w = bridge_w.template cast<U>();
  out.bridge_b = bridge_b.template cast<U>();
  out.dec = gru(dec);
  out.att_w = att_w.template cast<U>();
  out.att_v = att_v.template cast<U>();
  out.out_w = out_w.template cast<U>();
  out.out_b = out_b.template cast<U>();
  return out;
}

// ---------------------------------------------------------------------------
// Edit sets

WordEditSets diff_words(const corpus::Utterance& context,
                        const corpus::Utterance& proto_context) {
  const std::unordered_set<std::string> in_context(context.begin(), context.end());
  const std::unordered_set<std::string> in_proto(proto_context.begin(), proto_context.end());
  WordEditSets out;
  std::unordered_set<std::string> seen;
  for (const auto& w : context) {
    if (!in_proto.contains(w) && seen.insert(w).second) out.insertions.push_back(w);
  }
  seen.clear();
  for (const auto& w : proto_context) {
    if (!in_context.contains(w) && seen.insert(w).second) out.deletions.push_back(w);
  }
  return out;
}

EditSets compute_edit_sets(const corpus::Utterance& context,
                           const corpus::Utterance& proto_context, const Vocab& vocab) {
  const auto words = diff_words(context, proto_context);
  EditSets out;
  auto keep = [&](const std::vector<std::string>& src, std::vector<WordId>& dst) {
    for (const auto& w : src) {
      const WordId id = vocab.id(w);
      if (id >= static_cast<WordId>(Vocab::kReserved)) dst.push_back(id);
    }
  };
  keep(words.insertions, out.insertions);
  keep(words.deletions, out.deletions);
  return out;
}

Example make_example(const retrieval::Quadruple& q, const Vocab& vocab) {
  Example ex;
  ex.prototype = corpus::encode(q.prototype_response, vocab);
  ex.edits = compute_edit_sets(q.context, q.prototype_context, vocab);
  ex.target = corpus::encode(q.response, vocab, /*append_eos=*/true);
  return ex;
}

// ---------------------------------------------------------------------------
// Forward pieces

namespace {

bool insertions_active(Ablation a) { return a == Ablation::kFull || a == Ablation::kInsertOnly; }
bool deletions_active(Ablation a) { return a == Ablation::kFull || a == Ablation::kDeleteOnly; }

template <class T>
struct EncoderCache {
  std::vector<GruStepCache<T>> fwd;
  std::vector<GruStepCache<T>> bwd;
};

template <class T>
EncoderOutput<T> encode_impl(const ModelParams<T>& p, std::span<const WordId> prototype,
                             EncoderCache<T>* cache) {
  if (prototype.empty()) throw InvalidArgument("cannot encode an empty prototype");
  const Index n = static_cast<Index>(prototype.size());
  const Index He = p.enc_fwd.hidden_size();
  const Index Eo = 2 * He;
  EncoderOutput<T> out;
  out.states.resize(Eo, n);
  if (cache) {
    cache->fwd.resize(prototype.size());
    cache->bwd.resize(prototype.size());
  }
  Vec<T> h = Vec<T>::Zero(He);
  for (Index k = 0; k < n; ++k) {
    h = gru_step(p.enc_fwd, p.embedding.col(prototype[k]), h,
                 cache ? &cache->fwd[static_cast<std::size_t>(k)] : nullptr);
    out.states.col(k).head(He) = h;
  }
  h.setZero();
  for (Index k = n - 1; k >= 0; --k) {
    h = gru_step(p.enc_bwd, p.embedding.col(prototype[k]), h,
                 cache ? &cache->bwd[static_cast<std::size_t>(k)] : nullptr);
    out.states.col(k).tail(He) = h;
  }
  out.keys.noalias() = p.att_w.leftCols(Eo) * out.states;
  return out;
}

/// Additive attention pooling of word embeddings keyed on h_last.
template <class T>
struct PoolCache {
  Mat<T> words;   // emb x m
  Mat<T> hidden;  // attn x m, tanh activations
  Vec<T> weights;
  Vec<T> pooled;  // emb
};

template <class T>
PoolCache<T> attention_pool(const ModelParams<T>& p, const Mat<T>& w, const Vec<T>& v,
                            std::span<const WordId> ids, const Vec<T>& h_last) {
  const Index E = p.embedding.rows();
  PoolCache<T> c;
  c.pooled = Vec<T>::Zero(E);
  if (ids.empty()) return c;
  const Index m = static_cast<Index>(ids.size());
  c.words.resize(E, m);
  for (Index i = 0; i < m; ++i) c.words.col(i) = p.embedding.col(ids[static_cast<std::size_t>(i)]);
  const Vec<T> query = w.rightCols(w.cols() - E) * h_last;
  c.hidden = ((w.leftCols(E) * c.words).colwise() + query).array().tanh().matrix();
  const Vec<T> scores = c.hidden.transpose() * v;
  c.weights = softmax<T>(scores);
  c.pooled.noalias() = c.words * c.weights;
  return c;
}

template <class T>
void attention_pool_backward(const ModelParams<T>& p, const Mat<T>& w, const Vec<T>& v,
                             std::span<const WordId> ids, const Vec<T>& h_last,
                             const PoolCache<T>& c, const Vec<T>& dpooled, Mat<T>& dw,
                             Vec<T>& dv, Mat<T>& demb, Vec<T>& dh_last) {
  if (ids.empty()) return;
  const Index E = p.embedding.rows();
  Mat<T> dwords = dpooled * c.weights.transpose();
  const Vec<T> dweights = c.words.transpose() * dpooled;
  const Vec<T> dscores = softmax_backward<T>(c.weights, dweights);
  dv.noalias() += c.hidden * dscores;
  const Mat<T> dpre =
      ((v * dscores.transpose()).array() * (T(1) - c.hidden.array().square())).matrix();
  const Vec<T> dquery = dpre.rowwise().sum();
  dw.leftCols(E).noalias() += dpre * c.words.transpose();
  dw.rightCols(w.cols() - E).noalias() += dquery * h_last.transpose();
  dwords.noalias() += w.leftCols(E).transpose() * dpre;
  dh_last.noalias() += w.rightCols(w.cols() - E).transpose() * dquery;
  for (Index i = 0; i < dwords.cols(); ++i) demb.col(ids[static_cast<std::size_t>(i)]) += dwords.col(i);
}

template <class T>
struct EditCache {
  PoolCache<T> ins;
  PoolCache<T> del;
};

template <class T>
EditVector<T> edit_vector_impl(const ModelParams<T>& p, const EditSets& edits,
                               const Vec<T>& h_last, Ablation ablation, EditCache<T>* cache) {
  const Index E = p.embedding.rows();
  auto ins = attention_pool(p, p.ins_w, p.ins_v, std::span<const WordId>(edits.insertions), h_last);
  auto del = attention_pool(p, p.del_w, p.del_v, std::span<const WordId>(edits.deletions), h_last);
  EditVector<T> out;
  out.diff = Vec<T>::Zero(2 * E);
  if (insertions_active(ablation)) out.diff.head(E) = ins.pooled;
  if (deletions_active(ablation)) out.diff.tail(E) = del.pooled;
  out.z = (p.edit_w * out.diff + p.edit_b).array().tanh().matrix();
  out.beta = ins.weights;
  out.gamma = del.weights;
  if (cache) {
    cache->ins = std::move(ins);
    cache->del = std::move(del);
  }
  return out;
}

template <class T>
struct StepCache {
  GruStepCache<T> gru;
  Mat<T> hidden;  // attn x n tanh activations
  Vec<T> alpha;
  Vec<T> state;
};

/// GRU transition plus attention; writes the output-layer feature vector
/// [emb(prev) ⊕ state ⊕ context] into `feature`.
template <class T>
Vec<T> step_features(const ModelParams<T>& p, const Vec<T>& prev_state, WordId prev_word,
                     const Vec<T>& z, const EncoderOutput<T>& enc, Vec<T>& feature,
                     StepCache<T>* cache, Vec<T>* alpha_out) {
  const Index E = p.embedding.rows();
  const Index Z = z.size();
  const Index Hd = p.dec.hidden_size();
  const Index Eo = enc.states.rows();
  Vec<T> x(E + Z);
  x.head(E) = p.embedding.col(prev_word);
  x.tail(Z) = z;
  Vec<T> state = gru_step(p.dec, x, prev_state, cache ? &cache->gru : nullptr);
  const Vec<T> query = p.att_w.rightCols(Hd) * state;
  Mat<T> hidden = (enc.keys.colwise() + query).array().tanh().matrix();
  const Vec<T> scores = hidden.transpose() * p.att_v;
  Vec<T> alpha = softmax<T>(scores);
  feature.resize(E + Hd + Eo);
  feature.head(E) = x.head(E);
  feature.segment(E, Hd) = state;
  feature.tail(Eo).noalias() = enc.states * alpha;
  if (alpha_out) *alpha_out = alpha;
  if (cache) {
    cache->hidden = std::move(hidden);
    cache->alpha = std::move(alpha);
    cache->state = state;
  }
  return state;
}

}  // namespace

template <class T>
EncoderOutput<T> encode(const ModelParams<T>& p, std::span<const WordId> prototype) {
  return encode_impl<T>(p, prototype, nullptr);
}

template <class T>
EditVector<T> edit_vector(const ModelParams<T>& p, const EditSets& edits, const Vec<T>& h_last,
                          Ablation ablation) {
  return edit_vector_impl<T>(p, edits, h_last, ablation, nullptr);
}

template <class T>
Vec<T> initial_decoder_state(const ModelParams<T>& p, const EncoderOutput<T>& enc) {
  return (p.bridge_w * enc.last() + p.bridge_b).array().tanh().matrix();
}

template <class T>
StepResult<T> decoder_step(const ModelParams<T>& p, const Vec<T>& prev_state, WordId prev_word,
                           const Vec<T>& z, const EncoderOutput<T>& enc, StepMask mask) {
  StepResult<T> r;
  Vec<T> feature;
  r.state = step_features<T>(p, prev_state, prev_word, z, enc, feature, nullptr, &r.alpha);
  Vec<T> logits = p.out_w * feature + p.out_b;
  if (mask.forbid_unk && logits.size() > Vocab::kUnk) logits(Vocab::kUnk) = neg_inf<T>();
  if (mask.forbid_eos && logits.size() > Vocab::kEos) logits(Vocab::kEos) = neg_inf<T>();
  r.log_probs = log_softmax<T>(logits);
  return r;
}

template <class T>
Prepared<T> prepare(const ModelParams<T>& p, std::span<const WordId> prototype,
                    const EditSets& edits, Ablation ablation) {
  Prepared<T> out;
  out.enc = encode(p, prototype);
  out.edit = edit_vector<T>(p, edits, out.enc.last(), ablation);
  return out;
}

// ---------------------------------------------------------------------------
// Loss and gradients

template <class T>
T example_loss(const ModelParams<T>& p, const Example& ex, Ablation ablation,
               ModelParams<T>* grad, T scale) {
  if (ex.target.empty()) throw InvalidArgument("example target is empty");
  const Index E = p.embedding.rows();
  const Index Hd = p.dec.hidden_size();
  const Index Eo = 2 * p.enc_fwd.hidden_size();
  const Index Z = p.edit_b.size();
  const Index L = static_cast<Index>(ex.target.size());
  const bool train = grad != nullptr;

  EncoderCache<T> enc_cache;
  const EncoderOutput<T> enc =
      encode_impl<T>(p, std::span<const WordId>(ex.prototype), train ? &enc_cache : nullptr);
  const Vec<T> h_last = enc.last();
  EditCache<T> edit_cache;
  const EditVector<T> edit =
      edit_vector_impl<T>(p, ex.edits, h_last, ablation, train ? &edit_cache : nullptr);
  const Vec<T> s0 = initial_decoder_state(p, enc);

  std::vector<StepCache<T>> steps(train ? static_cast<std::size_t>(L) : 0);
  Mat<T> features(E + Hd + Eo, L);
  Vec<T> state = s0;
  Vec<T> feature;
  for (Index j = 0; j < L; ++j) {
    const WordId prev = j == 0 ? Vocab::kBos : ex.target[static_cast<std::size_t>(j - 1)];
    state = step_features<T>(p, state, prev, edit.z, enc, feature,
                             train ? &steps[static_cast<std::size_t>(j)] : nullptr, nullptr);
    features.col(j) = feature;
  }
  Mat<T> logits = p.out_w * features;
  logits.colwise() += p.out_b;

  T loss = 0;
  Mat<T> dlogits;
  if (train) dlogits.resize(logits.rows(), L);
  for (Index j = 0; j < L; ++j) {
    const Vec<T> lp = log_softmax<T>(logits.col(j));
    const WordId y = ex.target[static_cast<std::size_t>(j)];
    loss -= lp(y);
    if (train) {
      dlogits.col(j) = lp.array().exp().matrix() * scale;
      dlogits(y, j) -= scale;
    }
  }
  if (!train) return loss;

  ModelParams<T>& g = *grad;
  g.out_w.noalias() += dlogits * features.transpose();
  g.out_b += dlogits.rowwise().sum();
  const Mat<T> dfeatures = p.out_w.transpose() * dlogits;

  Mat<T> dstates = Mat<T>::Zero(Eo, enc.length());
  Mat<T> dkeys = Mat<T>::Zero(p.att_w.rows(), enc.length());
  Vec<T> dz = Vec<T>::Zero(Z);
  Vec<T> ds_next = Vec<T>::Zero(Hd);
  Vec<T> dx, dh_prev;
  for (Index j = L - 1; j >= 0; --j) {
    const auto& c = steps[static_cast<std::size_t>(j)];
    const WordId prev = j == 0 ? Vocab::kBos : ex.target[static_cast<std::size_t>(j - 1)];
    Vec<T> demb = dfeatures.col(j).head(E);
    Vec<T> ds = dfeatures.col(j).segment(E, Hd) + ds_next;
    const Vec<T> dctx = dfeatures.col(j).tail(Eo);

    const Vec<T> dalpha = enc.states.transpose() * dctx;
    dstates.noalias() += dctx * c.alpha.transpose();
    const Vec<T> dscores = softmax_backward<T>(c.alpha, dalpha);
    g.att_v.noalias() += c.hidden * dscores;
    const Mat<T> dpre =
        ((p.att_v * dscores.transpose()).array() * (T(1) - c.hidden.array().square())).matrix();
    dkeys += dpre;
    const Vec<T> dquery = dpre.rowwise().sum();
    g.att_w.rightCols(Hd).noalias() += dquery * c.state.transpose();
    ds.noalias() += p.att_w.rightCols(Hd).transpose() * dquery;

    gru_step_backward(p.dec, c.gru, ds, g.dec, dx, dh_prev);
    demb += dx.head(E);
    dz += dx.tail(Z);
    g.embedding.col(prev) += demb;
    ds_next = dh_prev;
  }

  const Vec<T> dbridge = (ds_next.array() * (T(1) - s0.array().square())).matrix();
  g.bridge_w.noalias() += dbridge * h_last.transpose();
  g.bridge_b += dbridge;
  Vec<T> dh_last = p.bridge_w.transpose() * dbridge;

  g.att_w.leftCols(Eo).noalias() += dkeys * enc.states.transpose();
  dstates.noalias() += p.att_w.leftCols(Eo).transpose() * dkeys;

  const Vec<T> dedit = (dz.array() * (T(1) - edit.z.array().square())).matrix();
  g.edit_w.noalias() += dedit * edit.diff.transpose();
  g.edit_b += dedit;
  const Vec<T> ddiff = p.edit_w.transpose() * dedit;
  if (insertions_active(ablation)) {
    attention_pool_backward<T>(p, p.ins_w, p.ins_v, std::span<const WordId>(ex.edits.insertions),
                               h_last, edit_cache.ins, ddiff.head(E), g.ins_w, g.ins_v,
                               g.embedding, dh_last);
  }
  if (deletions_active(ablation)) {
    attention_pool_backward<T>(p, p.del_w, p.del_v, std::span<const WordId>(ex.edits.deletions),
                               h_last, edit_cache.del, ddiff.tail(E), g.del_w, g.del_v,
                               g.embedding, dh_last);
  }
  dstates.col(enc.length() - 1) += dh_last;

  const Index He = Eo / 2;
  const Index n = enc.length();
  Vec<T> dh = Vec<T>::Zero(He);
  for (Index k = n - 1; k >= 0; --k) {
    dh += dstates.col(k).head(He);
    gru_step_backward(p.enc_fwd, enc_cache.fwd[static_cast<std::size_t>(k)], dh, g.enc_fwd, dx,
                      dh_prev);
    g.embedding.col(ex.prototype[static_cast<std::size_t>(k)]) += dx;
    dh = dh_prev;
  }
  dh.setZero();
  for (Index k = 0; k < n; ++k) {
    dh += dstates.col(k).tail(He);
    gru_step_backward(p.enc_bwd, enc_cache.bwd[static_cast<std::size_t>(k)], dh, g.enc_bwd, dx,
                      dh_prev);
    g.embedding.col(ex.prototype[static_cast<std::size_t>(k)]) += dx;
    dh = dh_prev;
  }
  return loss;
}

namespace {
std::size_t token_count(std::span<const Example> batch) {
  std::size_t n = 0;
  for (const auto& ex : batch) n += ex.target.size();
  return n;
}
}  // namespace

template <class T>
T nll(const ModelParams<T>& p, std::span<const Example> batch, Ablation ablation) {
  if (batch.empty()) throw InvalidArgument("nll of an empty batch");
  T total = 0;
  for (const auto& ex : batch) total += example_loss<T>(p, ex, ablation);
  return total / static_cast<T>(token_count(batch));
}

template <class T>
T backward(const ModelParams<T>& p, std::span<const Example> batch, Ablation ablation,
           ModelParams<T>& grad) {
  if (batch.empty()) throw InvalidArgument("backward of an empty batch");
  const T scale = T(1) / static_cast<T>(token_count(batch));
  T total = 0;
  for (const auto& ex : batch) total += example_loss<T>(p, ex, ablation, &grad, scale);
  return total * scale;
}

#define PROTOEDIT_INSTANTIATE(T)                                                               \
  template struct ModelParams<T>;                                                              \
  template ModelParams<float> ModelParams<T>::cast<float>() const;                             \
  template ModelParams<double> ModelParams<T>::cast<double>() const;                           \
  template EncoderOutput<T> encode<T>(const ModelParams<T>&, std::span<const WordId>);         \
  template EditVector<T> edit_vector<T>(const ModelParams<T>&, const EditSets&, const Vec<T>&, \
                                        Ablation);                                             \
  template Vec<T> initial_decoder_state<T>(const ModelParams<T>&, const EncoderOutput<T>&);    \
  template StepResult<T> decoder_step<T>(const ModelParams<T>&, const Vec<T>&, WordId,         \
                                         const Vec<T>&, const EncoderOutput<T>&, StepMask);    \
  template Prepared<T> prepare<T>(const ModelParams<T>&, std::span<const WordId>,              \
                                  const EditSets&, Ablation);                                  \
  template T example_loss<T>(const ModelParams<T>&, const Example&, Ablation, ModelParams<T>*, \
                             T);                                                               \
  template T nll<T>(const ModelParams<T>&, std::span<const Example>, Ablation);                \
  template T backward<T>(const ModelParams<T>&, std::span<const Example>, Ablation,            \
                         ModelParams<T>&);

PROTOEDIT_INSTANTIATE(float)
PROTOEDIT_INSTANTIATE(double)

#undef PROTOEDIT_INSTANTIATE

}  // namespace protoedit::editor
