// SPDX-License-Identifier: Apache-2.0
#include "protoedit/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "protoedit/adam.hpp"
#include "protoedit/checkpoint.hpp"
#include "protoedit/error.hpp"

namespace protoedit::matcher {

void MatcherHyperparams::validate() const {
  if (emb_dim < 1 || hidden < 1 || vocab_size < 1) {
    throw InvalidArgument("matcher dimensions must be >= 1");
  }
  if (batch_size < 1) throw InvalidArgument("matcher batch_size must be >= 1");
  if (!(lr > 0)) throw InvalidArgument("matcher lr must be > 0");
  if (neg_ratio < 1) throw InvalidArgument("neg_ratio must be >= 1");
  if (max_epochs < 1) throw InvalidArgument("matcher max_epochs must be >= 1");
  if (patience < 1) throw InvalidArgument("matcher patience must be >= 1");
}

void to_json(nlohmann::json& j, const MatcherHyperparams& hp) {
  j = nlohmann::json{{"emb_dim", hp.emb_dim},       {"hidden", hp.hidden},
                     {"vocab_size", hp.vocab_size}, {"batch_size", hp.batch_size},
                     {"lr", hp.lr},                 {"neg_ratio", hp.neg_ratio},
                     {"max_epochs", hp.max_epochs}, {"patience", hp.patience},
                     {"grad_clip_norm", hp.grad_clip_norm}, {"seed", hp.seed}};
}

void from_json(const nlohmann::json& j, MatcherHyperparams& hp) {
  MatcherHyperparams d;
  hp.emb_dim = j.value("emb_dim", d.emb_dim);
  hp.hidden = j.value("hidden", d.hidden);
  hp.vocab_size = j.value("vocab_size", d.vocab_size);
  hp.batch_size = j.value("batch_size", d.batch_size);
  hp.lr = j.value("lr", d.lr);
  hp.neg_ratio = j.value("neg_ratio", d.neg_ratio);
  hp.max_epochs = j.value("max_epochs", d.max_epochs);
  hp.patience = j.value("patience", d.patience);
  hp.grad_clip_norm = j.value("grad_clip_norm", d.grad_clip_norm);
  hp.seed = j.value("seed", d.seed);
}

template <class T>
MatcherParams<T>::MatcherParams(const MatcherHyperparams& hp) {
  hp.validate();
  embedding = Mat<T>::Zero(hp.emb_dim, hp.vocab_size);
  context_enc = GruParams<T>(hp.emb_dim, hp.hidden);
  response_enc = GruParams<T>(hp.emb_dim, hp.hidden);
  bilinear = Mat<T>::Zero(hp.hidden, hp.hidden);
}

template <class T>
MatcherParams<T> MatcherParams<T>::initialized(const MatcherHyperparams& hp, std::uint64_t seed) {
  MatcherParams p(hp);
  std::mt19937_64 rng(seed);
  p.visit([&](const std::string&, auto& block) {
    if (block.cols() > 1) glorot_uniform(block, rng);
  });
  return p;
}

template <class T>
void MatcherParams<T>::set_zero() {
  visit([](const std::string&, auto& block) { block.setZero(); });
}

template <class T>
bool MatcherParams<T>::all_finite() const {
  bool ok = true;
  visit([&](const std::string&, const auto& block) { ok = ok && block.allFinite(); });
  return ok;
}

template struct MatcherParams<float>;
template struct MatcherParams<double>;

namespace {

template <class T>
struct SideEncoding {
  Vec<T> state;
  std::vector<GruStepCache<T>> steps;
  Vec<T> grad;  // accumulated dL/d(state)
};

template <class T>
SideEncoding<T> encode_side(const GruParams<T>& gru, const Mat<T>& embedding,
                            std::span<const WordId> ids, bool keep_cache) {
  if (ids.empty()) throw InvalidArgument("matcher input must be nonempty");
  SideEncoding<T> out;
  out.state = Vec<T>::Zero(gru.hidden_size());
  if (keep_cache) out.steps.resize(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out.state = gru_step(gru, embedding.col(ids[i]), out.state, keep_cache ? &out.steps[i] : nullptr);
  }
  out.grad = Vec<T>::Zero(gru.hidden_size());
  return out;
}

template <class T>
void backprop_side(const GruParams<T>& gru, std::span<const WordId> ids, const SideEncoding<T>& enc,
                   GruParams<T>& grad_gru, Mat<T>& grad_embedding) {
  Vec<T> dh = enc.grad;
  Vec<T> dx, dh_prev;
  for (std::size_t i = ids.size(); i-- > 0;) {
    gru_step_backward(gru, enc.steps[i], dh, grad_gru, dx, dh_prev);
    grad_embedding.col(ids[i]) += dx;
    dh = dh_prev;
  }
}

/// log(1 + e^x) without overflow.
template <class T>
T softplus(T x) {
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

template <class T>
T match_score(const MatcherParams<T>& p, std::span<const WordId> context,
              std::span<const WordId> response) {
  const auto c = encode_side<T>(p.context_enc, p.embedding, context, false);
  const auto r = encode_side<T>(p.response_enc, p.embedding, response, false);
  return sigmoid<T>(c.state.dot(p.bilinear * r.state));
}

template float match_score<float>(const MatcherParams<float>&, std::span<const WordId>,
                                  std::span<const WordId>);
template double match_score<double>(const MatcherParams<double>&, std::span<const WordId>,
                                    std::span<const WordId>);

double match_score(const MatcherParams<float>& p, const corpus::Vocab& vocab,
                   const Utterance& context, const Utterance& response) {
  const auto c = corpus::encode(context, vocab);
  const auto r = corpus::encode(response, vocab);
  return static_cast<double>(match_score<float>(p, c, r));
}

std::vector<LabeledExample> sample_stream(std::span<const corpus::Pair> pairs, int neg_ratio,
                                          std::mt19937_64& rng) {
  if (pairs.empty()) throw InvalidArgument("cannot sample from an empty pair list");
  if (neg_ratio < 1) throw InvalidArgument("neg_ratio must be >= 1");
  std::vector<LabeledExample> stream;
  stream.reserve(pairs.size() * static_cast<std::size_t>(neg_ratio + 1));
  if (pairs.size() < 2) {
    throw InvalidArgument("negative sampling needs at least two pairs");
  }
  std::uniform_int_distribution<std::size_t> pick(0, pairs.size() - 2);
  constexpr int kMaxRedraws = 32;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    stream.push_back({i, i, true});
    for (int n = 0; n < neg_ratio; ++n) {
      std::size_t j = 0;
      for (int attempt = 0; attempt < kMaxRedraws; ++attempt) {
        j = pick(rng);
        if (j >= i) ++j;  // uniform over all indices except i
        if (pairs[j].response != pairs[i].response) break;
      }
      stream.push_back({i, j, false});
    }
  }
  return stream;
}

template <class T>
T stream_loss(const MatcherParams<T>& p, std::span<const std::vector<WordId>> contexts,
              std::span<const std::vector<WordId>> responses,
              std::span<const LabeledExample> stream, MatcherParams<T>* grad) {
  if (stream.empty()) throw InvalidArgument("empty matcher stream");
  const bool train = grad != nullptr;
  std::map<std::size_t, SideEncoding<T>> ctx, rsp;
  for (const auto& ex : stream) {
    if (!ctx.contains(ex.context))
      ctx.emplace(ex.context, encode_side<T>(p.context_enc, p.embedding, contexts[ex.context], train));
    if (!rsp.contains(ex.response))
      rsp.emplace(ex.response,
                  encode_side<T>(p.response_enc, p.embedding, responses[ex.response], train));
  }
  const T scale = T(1) / static_cast<T>(stream.size());
  T total = 0;
  for (const auto& ex : stream) {
    auto& c = ctx.at(ex.context);
    auto& r = rsp.at(ex.response);
    const Vec<T> mr = p.bilinear * r.state;
    const T logit = c.state.dot(mr);
    const T y = ex.positive ? T(1) : T(0);
    total += softplus(logit) - y * logit;
    if (train) {
      const T dlogit = (sigmoid(logit) - y) * scale;
      grad->bilinear.noalias() += dlogit * c.state * r.state.transpose();
      c.grad += dlogit * mr;
      r.grad.noalias() += dlogit * (p.bilinear.transpose() * c.state);
    }
  }
  if (train) {
    for (const auto& [i, enc] : ctx)
      backprop_side<T>(p.context_enc, contexts[i], enc, grad->context_enc, grad->embedding);
    for (const auto& [i, enc] : rsp)
      backprop_side<T>(p.response_enc, responses[i], enc, grad->response_enc, grad->embedding);
  }
  return total * scale;
}

template float stream_loss<float>(const MatcherParams<float>&, std::span<const std::vector<WordId>>,
                                  std::span<const std::vector<WordId>>,
                                  std::span<const LabeledExample>, MatcherParams<float>*);
template double stream_loss<double>(const MatcherParams<double>&,
                                    std::span<const std::vector<WordId>>,
                                    std::span<const std::vector<WordId>>,
                                    std::span<const LabeledExample>, MatcherParams<double>*);

StreamMetrics evaluate_stream(const MatcherParams<float>& p,
                              std::span<const std::vector<WordId>> contexts,
                              std::span<const std::vector<WordId>> responses,
                              std::span<const LabeledExample> stream) {
  StreamMetrics m;
  if (stream.empty()) return m;
  std::size_t correct = 0;
  double loss = 0.0;
  // Group key: context index. Track the best-scoring example per group.
  std::map<std::size_t, std::pair<double, bool>> best;
  std::map<std::size_t, Vec<float>> ctx_cache, rsp_cache;
  for (const auto& ex : stream) {
    auto cit = ctx_cache.find(ex.context);
    if (cit == ctx_cache.end())
      cit = ctx_cache.emplace(ex.context, encode_side<float>(p.context_enc, p.embedding,
                                                             contexts[ex.context], false).state).first;
    auto rit = rsp_cache.find(ex.response);
    if (rit == rsp_cache.end())
      rit = rsp_cache.emplace(ex.response, encode_side<float>(p.response_enc, p.embedding,
                                                              responses[ex.response], false).state).first;
    const double logit = static_cast<double>(cit->second.dot(p.bilinear * rit->second));
    const double y = ex.positive ? 1.0 : 0.0;
    loss += softplus(logit) - y * logit;
    if ((logit > 0.0) == ex.positive) ++correct;
    auto [it, inserted] = best.try_emplace(ex.context, logit, ex.positive);
    // Ties go against the positive so that a constant scorer earns no credit.
    if (!inserted && (logit > it->second.first || (logit == it->second.first && !ex.positive))) {
      it->second = {logit, ex.positive};
    }
  }
  m.loss = loss / static_cast<double>(stream.size());
  m.accuracy = static_cast<double>(correct) / static_cast<double>(stream.size());
  std::size_t hits = 0;
  for (const auto& [_, b] : best) hits += b.second ? 1 : 0;
  m.recall_at_1 = static_cast<double>(hits) / static_cast<double>(best.size());
  return m;
}

MatcherTrainResult train_matcher(std::span<const corpus::Pair> train_pairs,
                                 std::span<const corpus::Pair> validation_pairs,
                                 const corpus::Vocab& vocab, const MatcherHyperparams& hp,
                                 std::function<void(const MatcherEpoch&)> on_epoch) {
  hp.validate();
  if (train_pairs.size() < 2 || validation_pairs.size() < 2) {
    throw InvalidArgument("matcher training needs at least two train and two validation pairs");
  }
  auto encode_all = [&](std::span<const corpus::Pair> pairs, bool context) {
    std::vector<std::vector<WordId>> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(corpus::encode(context ? p.context : p.response, vocab));
    return out;
  };
  const auto train_ctx = encode_all(train_pairs, true);
  const auto train_rsp = encode_all(train_pairs, false);
  const auto val_ctx = encode_all(validation_pairs, true);
  const auto val_rsp = encode_all(validation_pairs, false);

  std::mt19937_64 rng(hp.seed + 7);
  std::mt19937_64 val_rng(hp.seed + 13);
  const auto val_stream = sample_stream(validation_pairs, hp.neg_ratio, val_rng);

  auto params = MatcherParams<float>::initialized(hp, hp.seed);
  MatcherParams<float> grad(hp);
  Adam<float, MatcherParams<float>> adam(params, hp.lr);

  MatcherTrainResult result;
  result.params = params;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (int epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    auto stream = sample_stream(train_pairs, hp.neg_ratio, rng);
    std::shuffle(stream.begin(), stream.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < stream.size(); start += static_cast<std::size_t>(hp.batch_size)) {
      const std::size_t end = std::min(stream.size(), start + static_cast<std::size_t>(hp.batch_size));
      std::span<const LabeledExample> batch(stream.data() + start, end - start);
      grad.set_zero();
      const float loss = stream_loss<float>(params, train_ctx, train_rsp, batch, &grad);
      if (!std::isfinite(loss) || !grad.all_finite()) {
        throw DivergenceError("matcher loss became non-finite at epoch " + std::to_string(epoch));
      }
      clip_global_norm<float>(grad, static_cast<float>(hp.grad_clip_norm));
      adam.step(params, grad);
      total += static_cast<double>(loss) * static_cast<double>(batch.size());
    }
    const auto val = evaluate_stream(params, val_ctx, val_rsp, val_stream);
    MatcherEpoch e{epoch, total / static_cast<double>(stream.size()), val.loss, val.accuracy};
    result.log.push_back(e);
    if (on_epoch) on_epoch(e);
    if (val.loss < result.best_val_loss) {
      result.best_val_loss = val.loss;
      result.best_val_accuracy = val.accuracy;
      result.params = params;
      stale = 0;
    } else if (++stale >= hp.patience) {
      result.stop_reason = "validation loss did not improve for " + std::to_string(hp.patience) +
                           " epochs";
      return result;
    }
  }
  result.stop_reason = "reached max_epochs";
  return result;
}

std::vector<Ranked> rerank(const MatcherParams<float>& p, const corpus::Vocab& vocab,
                           const Utterance& context, std::span<const Utterance> candidates) {
  std::vector<Ranked> out;
  out.reserve(candidates.size());
  const auto c_ids = corpus::encode(context, vocab);
  const auto c = encode_side<float>(p.context_enc, p.embedding, c_ids, false);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto r_ids = corpus::encode(candidates[i], vocab);
    const auto r = encode_side<float>(p.response_enc, p.embedding, r_ids, false);
    out.push_back({i, static_cast<double>(sigmoid<float>(c.state.dot(p.bilinear * r.state)))});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Ranked& a, const Ranked& b) { return a.score > b.score; });
  return out;
}

void save_matcher(const std::filesystem::path& path, const MatcherHyperparams& hp,
                  std::uint64_t vocab_hash, const MatcherParams<float>& params) {
  checkpoint::save(path, kMatcherCheckpointKind, nlohmann::json(hp), vocab_hash, params);
}

MatcherCheckpoint load_matcher(const std::filesystem::path& path) {
  const auto c = checkpoint::read(path);
  if (c.kind != kMatcherCheckpointKind) {
    throw IoError(path.string() + " is a '" + c.kind + "' checkpoint, not a matcher");
  }
  MatcherCheckpoint out;
  out.hp = c.header.get<MatcherHyperparams>();
  out.vocab_hash = c.vocab_hash;
  out.params = MatcherParams<float>(out.hp);
  checkpoint::unpack(c, out.params);
  return out;
}

}  // namespace protoedit::matcher
