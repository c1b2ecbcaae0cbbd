// SPDX-License-Identifier: Apache-2.0
#pragma once

// Versioned binary container shared by the editor and matcher checkpoints:
//
//   "PECK" | u8 version | str kind | str header-json | u64 vocab-hash |
//   u32 block-count | { str name | u64 rows | u64 cols | f32[rows*cols] }*
//
// All integers and floats little-endian, strings u32-length-prefixed,
// block data column-major.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "protoedit/error.hpp"
#include "protoedit/tensor.hpp"

namespace protoedit::checkpoint {

inline constexpr std::uint8_t kFormatVersion = 1;

struct Block {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<float> data;
};

struct Container {
  std::string kind;
  nlohmann::json header;
  std::uint64_t vocab_hash = 0;
  std::map<std::string, Block> blocks;
};

void write(const std::filesystem::path& path, const Container& c,
           const std::vector<std::string>& block_order);
Container read(const std::filesystem::path& path);

/// Copies every visited block of `params` into a container.
template <class Params>
Container pack(std::string kind, nlohmann::json header, std::uint64_t vocab_hash,
               const Params& params, std::vector<std::string>* order = nullptr) {
  Container c{std::move(kind), std::move(header), vocab_hash, {}};
  params.visit([&](const std::string& name, const auto& m) {
    Block b{static_cast<std::int64_t>(m.rows()), static_cast<std::int64_t>(m.cols()), {}};
    b.data.resize(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.size(); ++i) b.data[static_cast<std::size_t>(i)] = static_cast<float>(m.data()[i]);
    c.blocks.emplace(name, std::move(b));
    if (order) order->push_back(name);
  });
  return c;
}

/// Fills pre-shaped `params` from a container; every block must be present
/// with a matching shape.
template <class Params>
void unpack(const Container& c, Params& params) {
  params.visit([&](const std::string& name, auto& m) {
    const auto it = c.blocks.find(name);
    if (it == c.blocks.end()) throw IoError("checkpoint is missing block " + name);
    const Block& b = it->second;
    if (b.rows != m.rows() || b.cols != m.cols()) {
      throw IoError("checkpoint block " + name + " has shape " + std::to_string(b.rows) + "x" +
                    std::to_string(b.cols) + ", expected " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()));
    }
    using S = typename std::decay_t<decltype(m)>::Scalar;
    for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(b.data[static_cast<std::size_t>(i)]);
  });
  if (!params.all_finite()) throw IoError("checkpoint contains non-finite values");
}

template <class Params>
void save(const std::filesystem::path& path, const std::string& kind, nlohmann::json header,
          std::uint64_t vocab_hash, const Params& params) {
  std::vector<std::string> order;
  const auto c = pack(kind, std::move(header), vocab_hash, params, &order);
  write(path, c, order);
}

}  // namespace protoedit::checkpoint
