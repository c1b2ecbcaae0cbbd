// SPDX-License-Identifier: Apache-2.0
#include "protoedit/checkpoint.hpp"

#include <fstream>

#include "protoedit/binary_io.hpp"

namespace protoedit::checkpoint {

namespace {
constexpr char kMagic[5] = "PECK";
}

void write(const std::filesystem::path& path, const Container& c,
           const std::vector<std::string>& block_order) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  binio::write_magic(out, kMagic, kFormatVersion);
  binio::write_string(out, c.kind);
  binio::write_string(out, c.header.dump());
  binio::write<std::uint64_t>(out, c.vocab_hash);
  binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(block_order.size()));
  for (const auto& name : block_order) {
    const Block& b = c.blocks.at(name);
    binio::write_string(out, name);
    binio::write<std::uint64_t>(out, static_cast<std::uint64_t>(b.rows));
    binio::write<std::uint64_t>(out, static_cast<std::uint64_t>(b.cols));
    for (float v : b.data) binio::write<float>(out, v);
  }
  if (!out) throw IoError("write failure on " + path.string());
}

Container read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const auto version = binio::read_magic(in, kMagic);
  if (version != kFormatVersion) {
    throw IoError("unsupported checkpoint format version " + std::to_string(version));
  }
  Container c;
  c.kind = binio::read_string(in);
  try {
    c.header = nlohmann::json::parse(binio::read_string(in));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad checkpoint header: ") + e.what());
  }
  c.vocab_hash = binio::read<std::uint64_t>(in);
  const auto n = binio::read<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < n; ++i) {
    auto name = binio::read_string(in);
    Block b;
    b.rows = static_cast<std::int64_t>(binio::read<std::uint64_t>(in));
    b.cols = static_cast<std::int64_t>(binio::read<std::uint64_t>(in));
    if (b.rows < 0 || b.cols < 0 || b.rows * b.cols > (std::int64_t{1} << 34)) {
      throw IoError("checkpoint block " + name + " has an implausible shape");
    }
    b.data.resize(static_cast<std::size_t>(b.rows * b.cols));
    for (auto& v : b.data) v = binio::read<float>(in);
    c.blocks.emplace(std::move(name), std::move(b));
  }
  return c;
}

}  // namespace protoedit::checkpoint
