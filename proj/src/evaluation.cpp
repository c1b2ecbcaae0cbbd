// SPDX-License-Identifier: Apache-2.0
#include "protoedit/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include "protoedit/error.hpp"

namespace protoedit::eval {

void WordVectors::set(const std::string& word, Vec<double> v) {
  if (dim_ == 0) dim_ = static_cast<int>(v.size());
  if (v.size() != dim_) throw InvalidArgument("word vector dimension mismatch for " + word);
  table_[word] = std::move(v);
}

const Vec<double>* WordVectors::find(const std::string& word) const {
  const auto it = table_.find(word);
  return it == table_.end() ? nullptr : &it->second;
}

void WordVectors::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  std::vector<const std::string*> words;
  for (const auto& [w, _] : table_) words.push_back(&w);
  std::sort(words.begin(), words.end(), [](auto* a, auto* b) { return *a < *b; });
  char buf[32];
  for (const auto* w : words) {
    out << *w;
    for (double v : table_.at(*w)) {
      std::snprintf(buf, sizeof(buf), " %.9g", v);
      out << buf;
    }
    out << '\n';
  }
  if (!out) throw IoError("write failure on " + path.string());
}

WordVectors WordVectors::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  WordVectors wv;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    std::istringstream fields(line);
    std::string word;
    if (!(fields >> word)) continue;
    std::vector<double> values;
    double v = 0;
    while (fields >> v) values.push_back(v);
    if (!fields.eof()) throw IoError(path.string() + ":" + std::to_string(n) + ": bad number");
    if (values.empty()) throw IoError(path.string() + ":" + std::to_string(n) + ": no values");
    if (wv.dim_ != 0 && static_cast<int>(values.size()) != wv.dim_) {
      throw IoError(path.string() + ":" + std::to_string(n) + ": dimension mismatch");
    }
    wv.set(word, Eigen::Map<Vec<double>>(values.data(), static_cast<Index>(values.size())));
  }
  return wv;
}

namespace {

std::vector<const Vec<double>*> lookup(const Utterance& u, const WordVectors& wv) {
  std::vector<const Vec<double>*> out;
  for (const auto& w : u)
    if (const auto* v = wv.find(w)) out.push_back(v);
  return out;
}

double cosine(const Vec<double>& a, const Vec<double>& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(a.dot(b) / (na * nb), -1.0, 1.0);
}

Vec<double> mean_vector(const std::vector<const Vec<double>*>& vs) {
  Vec<double> m = Vec<double>::Zero(vs.front()->size());
  for (const auto* v : vs) m += *v;
  return m / static_cast<double>(vs.size());
}

Vec<double> extrema_vector(const std::vector<const Vec<double>*>& vs) {
  Vec<double> e = *vs.front();
  for (std::size_t i = 1; i < vs.size(); ++i)
    for (Index d = 0; d < e.size(); ++d)
      if (std::abs((*vs[i])(d)) > std::abs(e(d))) e(d) = (*vs[i])(d);
  return e;
}

}  // namespace

double embedding_average(const Utterance& hyp, const Utterance& ref, const WordVectors& wv) {
  const auto h = lookup(hyp, wv), r = lookup(ref, wv);
  if (h.empty() || r.empty()) return 0.0;
  return cosine(mean_vector(h), mean_vector(r));
}

double embedding_extrema(const Utterance& hyp, const Utterance& ref, const WordVectors& wv) {
  const auto h = lookup(hyp, wv), r = lookup(ref, wv);
  if (h.empty() || r.empty()) return 0.0;
  return cosine(extrema_vector(h), extrema_vector(r));
}

double greedy_direction(const Utterance& from, const Utterance& to, const WordVectors& wv) {
  const auto f = lookup(from, wv), t = lookup(to, wv);
  if (f.empty() || t.empty()) return 0.0;
  double total = 0.0;
  for (const auto* a : f) {
    double best = -1.0;
    for (const auto* b : t) best = std::max(best, cosine(*a, *b));
    total += best;
  }
  return total / static_cast<double>(f.size());
}

double embedding_greedy(const Utterance& hyp, const Utterance& ref, const WordVectors& wv) {
  return 0.5 * (greedy_direction(hyp, ref, wv) + greedy_direction(ref, hyp, wv));
}

double distinct_n(std::span<const Utterance> responses, int n) {
  if (n < 1) throw InvalidArgument("distinct_n requires n >= 1");
  if (responses.empty()) throw InvalidArgument("distinct_n over an empty response list");
  std::set<std::vector<std::string>> unique;
  std::size_t total = 0;
  const auto len = static_cast<std::size_t>(n);
  for (const auto& r : responses) {
    if (r.size() < len) continue;
    for (std::size_t i = 0; i + len <= r.size(); ++i) {
      unique.emplace(r.begin() + static_cast<std::ptrdiff_t>(i),
                     r.begin() + static_cast<std::ptrdiff_t>(i + len));
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(unique.size()) / static_cast<double>(total);
}

double originality(std::span<const Utterance> responses,
                   std::span<const Utterance> training_responses) {
  if (responses.empty()) return 0.0;
  const std::set<Utterance> seen(training_responses.begin(), training_responses.end());
  std::size_t novel = 0;
  for (const auto& r : responses) novel += seen.contains(r) ? 0 : 1;
  return static_cast<double>(novel) / static_cast<double>(responses.size());
}

void to_json(nlohmann::json& j, const MetricReport& r) {
  j = nlohmann::json{{"average", r.average},         {"extrema", r.extrema},
                     {"greedy", r.greedy},           {"distinct1", r.distinct1},
                     {"distinct2", r.distinct2},     {"originality", r.originality},
                     {"pairs", r.pairs}};
}

std::string format_table(const MetricReport& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%-8s %-8s %-8s %-10s %-10s %-11s %s\n"
                "%-8.3f %-8.3f %-8.3f %-10.3f %-10.3f %-11.3f %zu\n",
                "Average", "Extrema", "Greedy", "Distinct-1", "Distinct-2", "Originality",
                "Pairs", r.average, r.extrema, r.greedy, r.distinct1, r.distinct2, r.originality,
                r.pairs);
  return buf;
}

MetricReport evaluate_suite(std::span<const Utterance> outputs,
                            std::span<const Utterance> references,
                            std::span<const Utterance> training_responses,
                            const WordVectors& wv) {
  if (outputs.size() != references.size()) {
    throw InvalidArgument("outputs and references differ in length (" +
                          std::to_string(outputs.size()) + " vs " +
                          std::to_string(references.size()) + ")");
  }
  if (outputs.empty()) throw InvalidArgument("nothing to evaluate");
  MetricReport r;
  r.pairs = outputs.size();
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    r.average += embedding_average(outputs[i], references[i], wv);
    r.extrema += embedding_extrema(outputs[i], references[i], wv);
    r.greedy += embedding_greedy(outputs[i], references[i], wv);
  }
  const double n = static_cast<double>(outputs.size());
  r.average /= n;
  r.extrema /= n;
  r.greedy /= n;
  r.distinct1 = distinct_n(outputs, 1);
  r.distinct2 = distinct_n(outputs, 2);
  r.originality = originality(outputs, training_responses);
  return r;
}

WordVectors train_skipgram(std::span<const Utterance> sentences, const SkipGramOptions& options) {
  if (options.dim < 1 || options.window < 1 || options.negatives < 0 || options.epochs < 1) {
    throw InvalidArgument("invalid skip-gram options");
  }
  std::map<std::string, std::size_t> counts;
  for (const auto& s : sentences)
    for (const auto& w : s) ++counts[w];
  std::vector<std::string> words;
  std::vector<double> freq;
  std::unordered_map<std::string, int> index;
  for (const auto& [w, c] : counts) {
    if (static_cast<int>(c) < options.min_count) continue;
    index.emplace(w, static_cast<int>(words.size()));
    words.push_back(w);
    freq.push_back(std::pow(static_cast<double>(c), 0.75));
  }
  WordVectors out(options.dim);
  if (words.empty()) return out;

  const Index D = options.dim;
  const Index V = static_cast<Index>(words.size());
  std::mt19937_64 rng(options.seed);
  Mat<double> in(D, V), ctx = Mat<double>::Zero(D, V);
  std::uniform_real_distribution<double> init(-0.5 / static_cast<double>(D), 0.5 / static_cast<double>(D));
  for (Index i = 0; i < in.size(); ++i) in.data()[i] = init(rng);
  std::discrete_distribution<int> noise(freq.begin(), freq.end());
  std::uniform_int_distribution<int> shrink(0, options.window - 1);

  std::vector<std::vector<int>> encoded;
  std::size_t total_tokens = 0;
  for (const auto& s : sentences) {
    std::vector<int> ids;
    for (const auto& w : s) {
      const auto it = index.find(w);
      if (it != index.end()) ids.push_back(it->second);
    }
    total_tokens += ids.size();
    encoded.push_back(std::move(ids));
  }
  const double work = static_cast<double>(total_tokens) * options.epochs;
  double done = 0.0;
  Vec<double> grad_in(D);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    for (const auto& ids : encoded) {
      for (std::size_t pos = 0; pos < ids.size(); ++pos, done += 1.0) {
        const double lr = std::max(options.lr * 1e-4, options.lr * (1.0 - done / (work + 1.0)));
        const int reach = options.window - shrink(rng);
        const std::size_t lo = pos >= static_cast<std::size_t>(reach) ? pos - static_cast<std::size_t>(reach) : 0;
        const std::size_t hi = std::min(ids.size() - 1, pos + static_cast<std::size_t>(reach));
        for (std::size_t c = lo; c <= hi; ++c) {
          if (c == pos) continue;
          const int center = ids[pos];
          grad_in.setZero();
          for (int k = 0; k <= options.negatives; ++k) {
            const int target = k == 0 ? ids[c] : noise(rng);
            if (k > 0 && target == ids[c]) continue;
            const double label = k == 0 ? 1.0 : 0.0;
            const double score = sigmoid(in.col(center).dot(ctx.col(target)));
            const double g = lr * (label - score);
            grad_in += g * ctx.col(target);
            ctx.col(target) += g * in.col(center);
          }
          in.col(center) += grad_in;
        }
      }
    }
  }
  for (Index i = 0; i < V; ++i) out.set(words[static_cast<std::size_t>(i)], in.col(i));
  return out;
}

}  // namespace protoedit::eval
