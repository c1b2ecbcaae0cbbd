// SPDX-License-Identifier: Apache-2.0
#include "protoedit/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <utility>

#include "protoedit/error.hpp"

namespace protoedit::corpus {

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  if (in.bad()) throw IoError("read failure on " + path.string());
  return lines;
}

}  // namespace

Utterance tokenize(std::string_view text, const TokenizerOptions& options) {
  Utterance out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    std::size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    if (j > i) {
      std::string tok(text.substr(i, j - i));
      if (options.lowercase) std::transform(tok.begin(), tok.end(), tok.begin(), ascii_lower);
      out.push_back(std::move(tok));
    }
    i = j;
  }
  return out;
}

std::string join(const Utterance& u) {
  std::string out;
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (i) out.push_back(' ');
    out += u[i];
  }
  return out;
}

LoadResult parse_pairs(std::span<const std::string> lines, std::size_t max_len,
                       const TokenizerOptions& options) {
  LoadResult result;
  std::set<std::pair<std::string, std::string>> seen;
  for (std::size_t n = 0; n < lines.size(); ++n) {
    const std::string& line = lines[n];
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      result.errors.push_back({n + 1, "missing tab separator"});
      continue;
    }
    if (line.find('\t', tab + 1) != std::string::npos) {
      result.errors.push_back({n + 1, "more than one tab separator"});
      continue;
    }
    Utterance context = tokenize(std::string_view(line).substr(0, tab), options);
    Utterance response = tokenize(std::string_view(line).substr(tab + 1), options);
    if (context.empty() || response.empty()) {
      result.errors.push_back({n + 1, context.empty() ? "empty context" : "empty response"});
      continue;
    }
    if (context.size() > max_len || response.size() > max_len) {
      ++result.too_long;
      continue;
    }
    if (!seen.emplace(join(context), join(response)).second) {
      ++result.duplicates;
      continue;
    }
    Pair p;
    p.id = static_cast<PairId>(result.pairs.size());
    p.context = std::move(context);
    p.response = std::move(response);
    result.pairs.push_back(std::move(p));
  }
  return result;
}

LoadResult load_pairs(const std::filesystem::path& path, std::size_t max_len,
                      const TokenizerOptions& options) {
  const auto lines = read_lines(path);
  return parse_pairs(lines, max_len, options);
}

void write_pairs(const std::filesystem::path& path, std::span<const Pair> pairs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& p : pairs) out << join(p.context) << '\t' << join(p.response) << '\n';
  if (!out) throw IoError("write failure on " + path.string());
}

Vocab::Vocab()
    : Vocab(std::vector<std::string>{std::string(kPadToken), std::string(kBosToken),
                                     std::string(kEosToken), std::string(kUnkToken)}) {}

Vocab::Vocab(std::vector<std::string> id_to_word) : id_to_word_(std::move(id_to_word)) {
  if (id_to_word_.size() < kReserved || id_to_word_[kPad] != kPadToken ||
      id_to_word_[kBos] != kBosToken || id_to_word_[kEos] != kEosToken ||
      id_to_word_[kUnk] != kUnkToken) {
    throw InvalidArgument("vocabulary must start with the four reserved tokens");
  }
  word_to_id_.reserve(id_to_word_.size());
  for (std::size_t i = 0; i < id_to_word_.size(); ++i) {
    if (!word_to_id_.emplace(id_to_word_[i], static_cast<WordId>(i)).second) {
      throw InvalidArgument("duplicate vocabulary entry: " + id_to_word_[i]);
    }
  }
}

WordId Vocab::id(std::string_view word) const {
  const auto it = word_to_id_.find(std::string(word));
  return it == word_to_id_.end() ? kUnk : it->second;
}

bool Vocab::contains(std::string_view word) const {
  return word_to_id_.contains(std::string(word));
}

const std::string& Vocab::word(WordId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= id_to_word_.size()) {
    throw InvalidArgument("word id out of range: " + std::to_string(id));
  }
  return id_to_word_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocab::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& w : id_to_word_) {
    for (unsigned char c : w) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xff;
    h *= 1099511628211ULL;
  }
  return h;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& w : id_to_word_) out << w << '\n';
  if (!out) throw IoError("write failure on " + path.string());
}

Vocab Vocab::load(const std::filesystem::path& path) {
  auto lines = read_lines(path);
  while (!lines.empty() && lines.back().empty()) lines.pop_back();
  return Vocab(std::move(lines));
}

Vocab build_vocab(std::span<const Pair> pairs, std::size_t max_size) {
  if (max_size < Vocab::kReserved + 1) throw InvalidArgument("vocabulary max_size must be >= 5");
  if (pairs.empty()) throw InvalidArgument("cannot build a vocabulary from an empty corpus");
  std::map<std::string, std::size_t> counts;
  for (const auto& p : pairs) {
    for (const auto& w : p.context) ++counts[w];
    for (const auto& w : p.response) ++counts[w];
  }
  Vocab reserved;
  std::vector<std::pair<std::string, std::size_t>> ranked;
  ranked.reserve(counts.size());
  for (auto& [w, c] : counts) {
    if (!reserved.contains(w)) ranked.emplace_back(w, c);
  }
  // std::map iteration is already lexicographic, so a stable sort on count keeps the tie rule.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), max_size - Vocab::kReserved);
  std::vector<std::string> words = reserved.words();
  for (std::size_t i = 0; i < keep; ++i) words.push_back(ranked[i].first);
  return Vocab(std::move(words));
}

std::vector<WordId> encode(const Utterance& u, const Vocab& vocab, bool append_eos) {
  std::vector<WordId> ids;
  ids.reserve(u.size() + (append_eos ? 1 : 0));
  for (const auto& w : u) ids.push_back(vocab.id(w));
  if (append_eos) ids.push_back(Vocab::kEos);
  return ids;
}

Utterance decode(std::span<const WordId> ids, const Vocab& vocab) {
  Utterance out;
  out.reserve(ids.size());
  for (WordId id : ids) out.push_back(vocab.word(id));
  return out;
}

}  // namespace protoedit::corpus
