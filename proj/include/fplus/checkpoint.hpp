#pragma once

// Flat binary checkpoint, little-endian regardless of host:
//
//   magic "FPLK" | version u32 | tensor count u32
//   per tensor: name length u32 | name bytes | rank u32 | extents u64 each
//               | values f64 each
//
// Values are raw IEEE-754 doubles.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fplus/optim.hpp"
#include "fplus/tensor.hpp"

namespace fplus {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_le32(std::ostream& os, std::uint32_t v) {
  char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = char((v >> (8 * i)) & 0xff);
  os.write(bytes, 4);
}

inline void put_le64(std::ostream& os, std::uint64_t v) {
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = char((v >> (8 * i)) & 0xff);
  os.write(bytes, 8);
}

inline std::uint32_t get_le32(std::istream& is) {
  unsigned char bytes[4];
  is.read(reinterpret_cast<char*>(bytes), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

inline std::uint64_t get_le64(std::istream& is) {
  unsigned char bytes[8];
  is.read(reinterpret_cast<char*>(bytes), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | bytes[i];
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path,
                            const std::vector<NamedParam>& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path.string());
  os.write("FPLK", 4);
  detail::put_le32(os, kCheckpointVersion);
  detail::put_le32(os, std::uint32_t(params.size()));
  for (const NamedParam& p : params) {
    detail::put_le32(os, std::uint32_t(p.name.size()));
    os.write(p.name.data(), std::streamsize(p.name.size()));
    detail::put_le32(os, std::uint32_t(p.tensor.rank()));
    for (std::size_t extent : p.tensor.shape()) detail::put_le64(os, extent);
    for (double v : p.tensor.data()) {
      detail::put_le64(os, std::bit_cast<std::uint64_t>(v));
    }
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

inline std::vector<std::pair<std::string, Tensor>> load_checkpoint(
    const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "FPLK") {
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  }
  const std::uint32_t version = detail::get_le32(is);
  if (version != kCheckpointVersion) {
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = detail::get_le32(is);
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = detail::get_le32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const std::uint32_t rank = detail::get_le32(is);
    Shape shape(rank);
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<std::size_t>(detail::get_le64(is));
    }
    std::vector<double> values(shape_numel(shape));
    for (double& v : values) v = std::bit_cast<double>(detail::get_le64(is));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor payload");
    out.emplace_back(std::move(name), Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

}  // namespace fplus
