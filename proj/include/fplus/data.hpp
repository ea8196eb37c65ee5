#pragma once

// Dataset ingestion: IDX (MNIST-style) binary files with transparent gzip
// decompression, deterministic stratified subsampling, and synthetic
// generators (Gaussian blobs and rendered digit glyphs) for desk-scale runs
// without external files.

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "fplus/tensor.hpp"

namespace fplus {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  Tensor images;            // [n, channels, height, width], pixels in [0, 1]
  std::vector<int> labels;  // one class index per image
  int class_count = 0;

  std::size_t n() const { return labels.size(); }
};

inline Dataset make_dataset(Tensor images, std::vector<int> labels, int class_count) {
  if (images.rank() != 4 || images.shape()[0] != labels.size()) {
    throw DataError("dataset: images " + shape_to_string(images.shape()) + " vs " +
                    std::to_string(labels.size()) + " labels");
  }
  for (int label : labels) {
    if (label < 0 || label >= class_count) {
      throw DataError("dataset: label " + std::to_string(label) +
                      " out of range for " + std::to_string(class_count) + " classes");
    }
  }
  return Dataset{std::move(images), std::move(labels), class_count};
}

// ---------------------------------------------------------------------------
// IDX parsing

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t at) {
  if (at + 4 > bytes.size()) {
    throw DataError("idx: truncated header, need 4 bytes at offset " + std::to_string(at) +
                    " but file has " + std::to_string(bytes.size()));
  }
  return (std::uint32_t(bytes[at]) << 24) | (std::uint32_t(bytes[at + 1]) << 16) |
         (std::uint32_t(bytes[at + 2]) << 8) | std::uint32_t(bytes[at + 3]);
}

inline void write_be32(std::vector<std::uint8_t>& bytes, std::uint32_t v) {
  bytes.push_back(std::uint8_t(v >> 24));
  bytes.push_back(std::uint8_t(v >> 16));
  bytes.push_back(std::uint8_t(v >> 8));
  bytes.push_back(std::uint8_t(v));
}

}  // namespace detail

// Images file: magic 0x00000803, then n, h, w (all big-endian u32), then
// n*h*w unsigned bytes. Pixel p maps to p/255.
inline Tensor parse_idx_images(const std::vector<std::uint8_t>& bytes) {
  const std::uint32_t magic = detail::read_be32(bytes, 0);
  if (magic != kIdxImagesMagic) {
    throw DataError("idx images: bad magic 0x" + [magic] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08x", magic);
      return std::string(buf);
    }() + ", expected 0x00000803");
  }
  const std::size_t n = detail::read_be32(bytes, 4);
  const std::size_t h = detail::read_be32(bytes, 8);
  const std::size_t w = detail::read_be32(bytes, 12);
  const std::size_t expected = 16 + n * h * w;
  if (bytes.size() != expected) {
    throw DataError("idx images: truncated payload, expected " + std::to_string(expected) +
                    " bytes, got " + std::to_string(bytes.size()));
  }
  std::vector<double> pixels(n * h * w);
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    pixels[i] = bytes[16 + i] / 255.0;
  }
  return Tensor({n, 1, h, w}, std::move(pixels));
}

// Labels file: magic 0x00000801, then n (big-endian u32), then n unsigned
// bytes, each a class index 0..9.
inline std::vector<int> parse_idx_labels(const std::vector<std::uint8_t>& bytes) {
  const std::uint32_t magic = detail::read_be32(bytes, 0);
  if (magic != kIdxLabelsMagic) {
    throw DataError("idx labels: bad magic 0x" + [magic] {
      char buf[16];
      std::snprintf(buf, sizeof buf, "%08x", magic);
      return std::string(buf);
    }() + ", expected 0x00000801");
  }
  const std::size_t n = detail::read_be32(bytes, 4);
  if (bytes.size() != 8 + n) {
    throw DataError("idx labels: truncated payload, expected " + std::to_string(8 + n) +
                    " bytes, got " + std::to_string(bytes.size()));
  }
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (bytes[8 + i] > 9) {
      throw DataError("idx labels: label " + std::to_string(int(bytes[8 + i])) +
                      " at index " + std::to_string(i) + " out of range 0..9");
    }
    labels[i] = bytes[8 + i];
  }
  return labels;
}

// Minimal writers, the inverse of the parsers above (pixels quantized back
// to bytes by rounding).
inline std::vector<std::uint8_t> write_idx_images(const Tensor& images) {
  if (images.rank() != 4 || images.shape()[1] != 1) {
    throw DataError("idx writer: images must be [n, 1, h, w], got " +
                    shape_to_string(images.shape()));
  }
  std::vector<std::uint8_t> bytes;
  bytes.reserve(16 + images.size());
  detail::write_be32(bytes, kIdxImagesMagic);
  detail::write_be32(bytes, std::uint32_t(images.shape()[0]));
  detail::write_be32(bytes, std::uint32_t(images.shape()[2]));
  detail::write_be32(bytes, std::uint32_t(images.shape()[3]));
  for (double v : images.data()) {
    bytes.push_back(std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return bytes;
}

inline std::vector<std::uint8_t> write_idx_labels(const std::vector<int>& labels) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(8 + labels.size());
  detail::write_be32(bytes, kIdxLabelsMagic);
  detail::write_be32(bytes, std::uint32_t(labels.size()));
  for (int label : labels) bytes.push_back(std::uint8_t(label));
  return bytes;
}

// ---------------------------------------------------------------------------
// File loading with transparent gzip

inline bool is_gzip(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b;
}

inline std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& compressed) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) {
    throw DataError("gzip: inflateInit failed");
  }
  zs.next_in = const_cast<Bytef*>(compressed.data());
  zs.avail_in = static_cast<uInt>(compressed.size());
  std::vector<std::uint8_t> out;
  std::uint8_t chunk[1 << 15];
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof chunk;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw DataError("gzip: corrupt stream (zlib rc " + std::to_string(rc) + ")");
    }
    out.insert(out.end(), chunk, chunk + (sizeof chunk - zs.avail_out));
  }
  inflateEnd(&zs);
  return out;
}

inline std::vector<std::uint8_t> load_idx_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (is_gzip(bytes)) return gunzip(bytes);
  return bytes;
}

struct IdxFilePair {
  std::string images;
  std::string labels;
};

inline IdxFilePair mnist_train_files() {
  return {"train-images-idx3-ubyte", "train-labels-idx1-ubyte"};
}
inline IdxFilePair mnist_test_files() {
  return {"t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"};
}

inline std::filesystem::path resolve_idx_file(const std::filesystem::path& dir,
                                              const std::string& name) {
  for (const std::string& candidate : {name, name + ".gz"}) {
    if (std::filesystem::exists(dir / candidate)) return dir / candidate;
  }
  throw DataError("missing dataset file: expected " + (dir / name).string() +
                  " or " + (dir / (name + ".gz")).string());
}

inline Dataset load_idx_dataset(const std::filesystem::path& dir,
                                const IdxFilePair& files, int class_count = 10) {
  Tensor images = parse_idx_images(load_idx_bytes(resolve_idx_file(dir, files.images)));
  std::vector<int> labels =
      parse_idx_labels(load_idx_bytes(resolve_idx_file(dir, files.labels)));
  return make_dataset(std::move(images), std::move(labels), class_count);
}

// ---------------------------------------------------------------------------
// Subsetting

inline Dataset select_examples(const Dataset& d, const std::vector<std::size_t>& indices) {
  const Shape& s = d.images.shape();
  const std::size_t stride = s[1] * s[2] * s[3];
  std::vector<double> pixels(indices.size() * stride);
  std::vector<int> labels(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const double* src = d.images.data().data() + indices[i] * stride;
    std::copy(src, src + stride, pixels.data() + i * stride);
    labels[i] = d.labels[indices[i]];
  }
  return Dataset{Tensor({indices.size(), s[1], s[2], s[3]}, std::move(pixels)),
                 std::move(labels), d.class_count};
}

// Exactly per_class examples of every class, chosen and ordered
// deterministically by seed.
inline Dataset stratified_subset(const Dataset& d, std::size_t per_class,
                                 std::uint64_t seed) {
  if (per_class == 0) throw std::invalid_argument("stratified_subset: per_class must be >= 1");
  std::vector<std::vector<std::size_t>> by_class(d.class_count);
  for (std::size_t i = 0; i < d.n(); ++i) by_class[d.labels[i]].push_back(i);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  chosen.reserve(per_class * d.class_count);
  for (int c = 0; c < d.class_count; ++c) {
    if (by_class[c].size() < per_class) {
      throw DataError("stratified_subset: class " + std::to_string(c) + " has only " +
                      std::to_string(by_class[c].size()) + " examples, need " +
                      std::to_string(per_class));
    }
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
    chosen.insert(chosen.end(), by_class[c].begin(), by_class[c].begin() + per_class);
  }
  std::shuffle(chosen.begin(), chosen.end(), rng);
  return select_examples(d, chosen);
}

// ---------------------------------------------------------------------------
// Synthetic data

// Gaussian blobs around distinct centers on a circle of chord length 10,
// flattened to [n, 1, 1, 2] for the dense model.
inline Dataset synth_blobs(std::size_t n_per_class, int classes, double spread,
                           std::uint64_t seed) {
  if (classes < 2) throw std::invalid_argument("synth_blobs: needs >= 2 classes");
  if (!(spread > 0.0)) throw std::invalid_argument("synth_blobs: spread must be > 0");
  const double radius = 5.0 / std::sin(3.14159265358979323846 / classes);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, spread);
  const std::size_t n = n_per_class * classes;
  std::vector<double> pixels(n * 2);
  std::vector<int> labels(n);
  std::size_t at = 0;
  for (int c = 0; c < classes; ++c) {
    const double angle = 2.0 * 3.14159265358979323846 * c / classes;
    const double cx = radius * std::cos(angle);
    const double cy = radius * std::sin(angle);
    for (std::size_t i = 0; i < n_per_class; ++i, ++at) {
      pixels[at * 2] = cx + noise(rng);
      pixels[at * 2 + 1] = cy + noise(rng);
      labels[at] = c;
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<double> shuffled(n * 2);
  std::vector<int> shuffled_labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    shuffled[i * 2] = pixels[order[i] * 2];
    shuffled[i * 2 + 1] = pixels[order[i] * 2 + 1];
    shuffled_labels[i] = labels[order[i]];
  }
  return Dataset{Tensor({n, 1, 1, 2}, std::move(shuffled)),
                 std::move(shuffled_labels), classes};
}

namespace detail {

// 5x7 digit glyphs, row-major, one string per row.
inline const char* digit_glyph(int digit, int row) {
  static const char* glyphs[10][7] = {
      {"01110", "10001", "10011", "10101", "11001", "10001", "01110"},
      {"00100", "01100", "00100", "00100", "00100", "00100", "01110"},
      {"01110", "10001", "00001", "00010", "00100", "01000", "11111"},
      {"11111", "00010", "00100", "00010", "00001", "10001", "01110"},
      {"00010", "00110", "01010", "10010", "11111", "00010", "00010"},
      {"11111", "10000", "11110", "00001", "00001", "10001", "01110"},
      {"00110", "01000", "10000", "11110", "10001", "10001", "01110"},
      {"11111", "00001", "00010", "00100", "01000", "01000", "01000"},
      {"01110", "10001", "10001", "01110", "10001", "10001", "01110"},
      {"01110", "10001", "10001", "01111", "00001", "00010", "01100"},
  };
  return glyphs[digit][row];
}

// Bilinear sample of a glyph treated as a continuous field on [0,5]x[0,7].
inline double glyph_field(int digit, double u, double v) {
  const double gu = u - 0.5, gv = v - 0.5;
  const int u0 = static_cast<int>(std::floor(gu));
  const int v0 = static_cast<int>(std::floor(gv));
  const double fu = gu - u0, fv = gv - v0;
  auto cell = [digit](int cu, int cv) -> double {
    if (cu < 0 || cu >= 5 || cv < 0 || cv >= 7) return 0.0;
    return digit_glyph(digit, cv)[cu] == '1' ? 1.0 : 0.0;
  };
  return cell(u0, v0) * (1 - fu) * (1 - fv) + cell(u0 + 1, v0) * fu * (1 - fv) +
         cell(u0, v0 + 1) * (1 - fu) * fv + cell(u0 + 1, v0 + 1) * fu * fv;
}

}  // namespace detail

// MNIST-analogue generator: 28x28 grayscale digit glyphs with random
// rotation, scale, translation, stroke intensity, and pixel noise.
// Deterministic per seed; pixels are quantized to byte resolution so the
// in-memory dataset matches an IDX round trip exactly.
inline Dataset synth_digits(std::size_t n_per_class, std::uint64_t seed) {
  if (n_per_class == 0) throw std::invalid_argument("synth_digits: n_per_class must be >= 1");
  const std::size_t side = 28;
  const std::size_t n = n_per_class * 10;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> rot(-0.26, 0.26);      // ~ +-15 degrees
  std::uniform_real_distribution<double> scl(2.4, 3.4);         // glyph cell -> pixels
  std::uniform_real_distribution<double> shift(-3.0, 3.0);
  std::uniform_real_distribution<double> stroke(0.65, 1.0);
  std::normal_distribution<double> noise(0.0, 0.06);

  std::vector<double> pixels(n * side * side);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int digit = static_cast<int>(i % 10);
    labels[i] = digit;
    const double theta = rot(rng);
    const double sx = scl(rng), sy = scl(rng);
    const double dx = shift(rng), dy = shift(rng);
    const double intensity = stroke(rng);
    const double cos_t = std::cos(theta), sin_t = std::sin(theta);
    double* img = pixels.data() + i * side * side;
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        // inverse-map the output pixel into glyph coordinates
        const double px = (x + 0.5) - (side / 2.0 + dx);
        const double py = (y + 0.5) - (side / 2.0 + dy);
        const double rx = cos_t * px + sin_t * py;
        const double ry = -sin_t * px + cos_t * py;
        const double u = rx / sx + 2.5;
        const double v = ry / sy + 3.5;
        double value = intensity * detail::glyph_field(digit, u, v) + noise(rng);
        value = std::clamp(value, 0.0, 1.0);
        img[y * side + x] = std::lround(value * 255.0) / 255.0;
      }
    }
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Dataset all{Tensor({n, 1, side, side}, std::move(pixels)), std::move(labels), 10};
  return select_examples(all, order);
}

}  // namespace fplus
