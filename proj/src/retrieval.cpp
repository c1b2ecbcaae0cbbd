// SPDX-License-Identifier: Apache-2.0
#include "protoedit/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_set>

#include "protoedit/binary_io.hpp"
#include "protoedit/error.hpp"

namespace protoedit::retrieval {

namespace {

constexpr char kIndexMagic[5] = "PEIX";
constexpr std::uint8_t kIndexVersion = 1;

std::vector<std::string> unique_in_order(const Utterance& u) {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  for (const auto& w : u) {
    if (seen.insert(w).second) out.push_back(w);
  }
  return out;
}

bool hit_before(const RetrievalHit& a, const RetrievalHit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc < b.doc;
}

}  // namespace

double jaccard(const Utterance& a, const Utterance& b) {
  const std::unordered_set<std::string> sa(a.begin(), a.end());
  const std::unordered_set<std::string> sb(b.begin(), b.end());
  if (sa.empty() && sb.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& w : sa) inter += sb.count(w);
  const std::size_t uni = sa.size() + sb.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

InvertedIndex InvertedIndex::build(std::span<const std::pair<PairId, Utterance>> docs,
                                   Side side) {
  if (docs.empty()) throw InvalidArgument("cannot index an empty document list");
  std::vector<const std::pair<PairId, Utterance>*> order;
  order.reserve(docs.size());
  for (const auto& d : docs) order.push_back(&d);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->first < b->first; });

  InvertedIndex index;
  index.side_ = side;
  double total = 0.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& [id, tokens] = *order[i];
    if (i > 0 && order[i - 1]->first == id) {
      throw InvalidArgument("duplicate document id " + std::to_string(id));
    }
    std::map<std::string, std::uint32_t> tf;
    for (const auto& w : tokens) ++tf[w];
    for (const auto& [term, count] : tf) index.postings_[term].push_back({id, count});
    index.doc_len_[id] = static_cast<std::uint32_t>(tokens.size());
    total += static_cast<double>(tokens.size());
  }
  index.avg_doc_len_ = total / static_cast<double>(order.size());
  return index;
}

InvertedIndex InvertedIndex::build(std::span<const Pair> pairs, Side side) {
  std::vector<std::pair<PairId, Utterance>> docs;
  docs.reserve(pairs.size());
  for (const auto& p : pairs) {
    docs.emplace_back(p.id, side == Side::kContext ? p.context : p.response);
  }
  return build(docs, side);
}

double InvertedIndex::idf(std::size_t df) const {
  const double n = static_cast<double>(doc_count());
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

const std::vector<Posting>* InvertedIndex::postings(const std::string& term) const {
  const auto it = postings_.find(term);
  return it == postings_.end() ? nullptr : &it->second;
}

std::uint32_t InvertedIndex::doc_len(PairId doc) const {
  const auto it = doc_len_.find(doc);
  if (it == doc_len_.end()) throw InvalidArgument("unknown document id " + std::to_string(doc));
  return it->second;
}

std::vector<RetrievalHit> InvertedIndex::search(const Utterance& query, std::size_t k,
                                                const Bm25Params& params) const {
  if (k == 0) throw InvalidArgument("search requires k >= 1");
  std::unordered_map<PairId, double> acc;
  for (const auto& term : unique_in_order(query)) {
    const auto* list = postings(term);
    if (!list) continue;
    const double w = idf(list->size());
    for (const auto& p : *list) {
      const double tf = p.tf;
      const double norm =
          params.k1 * (1.0 - params.b + params.b * doc_len_.at(p.doc) / avg_doc_len_);
      acc[p.doc] += w * tf * (params.k1 + 1.0) / (tf + norm);
    }
  }
  std::vector<RetrievalHit> hits;
  hits.reserve(acc.size());
  for (const auto& [doc, score] : acc) hits.push_back({doc, score});
  const std::size_t n = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(n), hits.end(),
                    hit_before);
  hits.resize(n);
  return hits;
}

void InvertedIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  binio::write_magic(out, kIndexMagic, kIndexVersion);
  binio::write<std::uint8_t>(out, static_cast<std::uint8_t>(side_));
  std::vector<std::pair<PairId, std::uint32_t>> lens(doc_len_.begin(), doc_len_.end());
  std::sort(lens.begin(), lens.end());
  binio::write<std::uint64_t>(out, lens.size());
  for (const auto& [id, len] : lens) {
    binio::write<std::int64_t>(out, id);
    binio::write<std::uint32_t>(out, len);
  }
  std::vector<const std::string*> terms;
  terms.reserve(postings_.size());
  for (const auto& [t, _] : postings_) terms.push_back(&t);
  std::sort(terms.begin(), terms.end(), [](auto* a, auto* b) { return *a < *b; });
  binio::write<std::uint64_t>(out, terms.size());
  for (const auto* t : terms) {
    binio::write_string(out, *t);
    const auto& list = postings_.at(*t);
    binio::write<std::uint64_t>(out, list.size());
    for (const auto& p : list) {
      binio::write<std::int64_t>(out, p.doc);
      binio::write<std::uint32_t>(out, p.tf);
    }
  }
  if (!out) throw IoError("write failure on " + path.string());
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto version = binio::read_magic(in, kIndexMagic);
  if (version != kIndexVersion) {
    throw IoError("unsupported index format version " + std::to_string(version));
  }
  InvertedIndex index;
  const auto side = binio::read<std::uint8_t>(in);
  if (side > 1) throw IoError("bad index side tag");
  index.side_ = static_cast<Side>(side);
  const auto ndocs = binio::read<std::uint64_t>(in);
  double total = 0.0;
  for (std::uint64_t i = 0; i < ndocs; ++i) {
    const auto id = binio::read<std::int64_t>(in);
    const auto len = binio::read<std::uint32_t>(in);
    index.doc_len_[id] = len;
    total += len;
  }
  if (ndocs == 0) throw IoError("index has no documents");
  index.avg_doc_len_ = total / static_cast<double>(ndocs);
  const auto nterms = binio::read<std::uint64_t>(in);
  for (std::uint64_t i = 0; i < nterms; ++i) {
    auto term = binio::read_string(in);
    const auto n = binio::read<std::uint64_t>(in);
    std::vector<Posting> list;
    list.reserve(n);
    for (std::uint64_t j = 0; j < n; ++j) {
      const auto doc = binio::read<std::int64_t>(in);
      const auto tf = binio::read<std::uint32_t>(in);
      if (!index.doc_len_.contains(doc)) throw IoError("posting references unknown document");
      list.push_back({doc, tf});
    }
    index.postings_.emplace(std::move(term), std::move(list));
  }
  return index;
}

std::vector<Quadruple> build_training_quadruples(std::span<const Pair> pairs,
                                                 const InvertedIndex& response_index,
                                                 const QuadrupleOptions& options) {
  std::unordered_map<PairId, const Pair*> by_id;
  by_id.reserve(pairs.size());
  for (const auto& p : pairs) by_id.emplace(p.id, &p);

  std::vector<Quadruple> quads;
  for (const auto& pair : pairs) {
    for (const auto& hit : response_index.search(pair.response, options.k)) {
      if (hit.doc == pair.id) continue;
      const auto it = by_id.find(hit.doc);
      if (it == by_id.end()) continue;
      const Pair& proto = *it->second;
      const double j = jaccard(pair.response, proto.response);
      if (j < options.min_jaccard || j > options.max_jaccard) continue;
      quads.push_back({pair.id, proto.id, pair.context, pair.response, proto.context,
                       proto.response, j});
    }
  }
  return quads;
}

std::vector<std::pair<const Pair*, double>> select_prototypes_for_inference(
    const Utterance& context, const InvertedIndex& context_index, std::span<const Pair> pairs,
    std::size_t k) {
  std::vector<std::pair<const Pair*, double>> out;
  for (const auto& hit : context_index.search(context, k)) {
    const Pair* match = nullptr;
    const auto idx = static_cast<std::size_t>(hit.doc);
    if (hit.doc >= 0 && idx < pairs.size() && pairs[idx].id == hit.doc) {
      match = &pairs[idx];
    } else {
      const auto it = std::find_if(pairs.begin(), pairs.end(),
                                   [&](const Pair& p) { return p.id == hit.doc; });
      if (it != pairs.end()) match = &*it;
    }
    if (!match) throw InvalidArgument("index references a pair missing from the corpus");
    out.emplace_back(match, hit.score);
  }
  return out;
}

void write_quadruples(const std::filesystem::path& path, std::span<const Quadruple> quads) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& q : quads) {
    out << corpus::join(q.context) << '\t' << corpus::join(q.response) << '\t'
        << corpus::join(q.prototype_context) << '\t' << corpus::join(q.prototype_response)
        << '\n';
  }
  if (!out) throw IoError("write failure on " + path.string());
}

std::vector<Quadruple> read_quadruples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Quadruple> quads;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      const auto tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 4) {
      throw IoError(path.string() + ":" + std::to_string(n) + ": expected 4 tab-separated fields");
    }
    Quadruple q;
    q.context = corpus::tokenize(fields[0]);
    q.response = corpus::tokenize(fields[1]);
    q.prototype_context = corpus::tokenize(fields[2]);
    q.prototype_response = corpus::tokenize(fields[3]);
    q.jaccard = jaccard(q.response, q.prototype_response);
    quads.push_back(std::move(q));
  }
  return quads;
}

}  // namespace protoedit::retrieval
