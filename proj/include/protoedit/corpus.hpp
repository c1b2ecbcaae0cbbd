// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace protoedit::corpus {

using WordId = std::int32_t;
using PairId = std::int64_t;

/// A whitespace-free token sequence.
using Utterance = std::vector<std::string>;

struct Pair {
  PairId id = 0;
  Utterance context;
  Utterance response;
};

struct RecordError {
  std::size_t line = 0;  // 1-based
  std::string message;
};

struct LoadResult {
  std::vector<Pair> pairs;
  std::vector<RecordError> errors;
  std::size_t duplicates = 0;
  std::size_t too_long = 0;
};

struct TokenizerOptions {
  bool lowercase = false;
};

inline constexpr std::size_t kDefaultMaxLen = 30;

/// Splits on runs of ASCII whitespace. Lowercasing is ASCII-only.
Utterance tokenize(std::string_view text, const TokenizerOptions& options = {});

/// Joins tokens with single spaces.
std::string join(const Utterance& u);

/// Reads a "context\tresponse" TSV file. Malformed lines become record errors;
/// duplicate pairs and pairs with a side longer than max_len are dropped.
/// Ids are assigned sequentially to the surviving pairs in file order.
/// Throws IoError if the file cannot be read.
LoadResult load_pairs(const std::filesystem::path& path, std::size_t max_len = kDefaultMaxLen,
                      const TokenizerOptions& options = {});

/// Same as load_pairs but over an in-memory line sequence.
LoadResult parse_pairs(std::span<const std::string> lines, std::size_t max_len = kDefaultMaxLen,
                       const TokenizerOptions& options = {});

void write_pairs(const std::filesystem::path& path, std::span<const Pair> pairs);

class Vocab {
 public:
  static constexpr WordId kPad = 0;
  static constexpr WordId kBos = 1;
  static constexpr WordId kEos = 2;
  static constexpr WordId kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kBosToken = "<s>";
  static constexpr std::string_view kEosToken = "</s>";
  static constexpr std::string_view kUnkToken = "<unk>";

  /// Reserved tokens only.
  Vocab();

  /// Builds from an id-ordered word list whose first four entries are the reserved tokens.
  explicit Vocab(std::vector<std::string> id_to_word);

  [[nodiscard]] std::size_t size() const { return id_to_word_.size(); }
  [[nodiscard]] WordId id(std::string_view word) const;  // kUnk when absent
  [[nodiscard]] bool contains(std::string_view word) const;
  [[nodiscard]] const std::string& word(WordId id) const;  // throws InvalidArgument
  [[nodiscard]] const std::vector<std::string>& words() const { return id_to_word_; }

  /// FNV-1a over the id-ordered word list; checkpoints record it.
  [[nodiscard]] std::uint64_t hash() const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

 private:
  std::vector<std::string> id_to_word_;
  std::unordered_map<std::string, WordId> word_to_id_;
};

/// Frequency-ranked vocabulary over contexts and responses. Ties are broken
/// lexicographically; the top (max_size - 4) words follow the reserved ids.
/// Throws InvalidArgument if max_size < 5 or pairs is empty.
Vocab build_vocab(std::span<const Pair> pairs, std::size_t max_size);

/// Out-of-vocabulary words map to UNK. Appends EOS when append_eos is set.
std::vector<WordId> encode(const Utterance& u, const Vocab& vocab, bool append_eos = false);

/// Throws InvalidArgument on an id outside the vocabulary.
Utterance decode(std::span<const WordId> ids, const Vocab& vocab);

}  // namespace protoedit::corpus
