#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "restore/rng.hh"
#include "restore/tensor.hh"

namespace restore {

// ---------------------------------------------------------------------------
// IDX container
// ---------------------------------------------------------------------------

struct MnistSet {
  static constexpr std::size_t rows = 28;
  static constexpr std::size_t cols = 28;
  static constexpr std::size_t image_bytes = rows * cols;

  std::size_t count = 0;
  std::vector<std::uint8_t> images;  // count * 784, row-major
  std::uint32_t checksum = 0;        // CRC-32 of the (decompressed) file bytes

  std::span<const std::uint8_t> image(std::size_t i) const {
    return {images.data() + i * image_bytes, image_bytes};
  }
};

namespace detail {

inline std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
         std::uint32_t(p[3]);
}

inline void write_be32(std::uint32_t v, std::uint8_t* p) {
  p[0] = std::uint8_t(v >> 24);
  p[1] = std::uint8_t(v >> 16);
  p[2] = std::uint8_t(v >> 8);
  p[3] = std::uint8_t(v);
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

inline std::vector<std::uint8_t> gunzip(const std::vector<std::uint8_t>& raw,
                                        const std::string& path) {
  z_stream zs{};
  if (inflateInit2(&zs, 15 + 16) != Z_OK) throw DataError("zlib init failed for " + path);
  std::vector<std::uint8_t> out;
  out.reserve(raw.size() * 4);
  std::uint8_t buf[1 << 16];
  zs.next_in = const_cast<std::uint8_t*>(raw.data());
  zs.avail_in = static_cast<uInt>(raw.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = buf;
    zs.avail_out = sizeof buf;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      inflateEnd(&zs);
      throw DataError("gzip stream in " + path + " is corrupt");
    }
    out.insert(out.end(), buf, buf + (sizeof buf - zs.avail_out));
  }
  inflateEnd(&zs);
  return out;
}

}  // namespace detail

/// Parses an IDX image file (big-endian magic 0x00000803, dims N,28,28, then
/// N*784 unsigned bytes). Gzip input is accepted by magic sniffing.
inline MnistSet load_idx(const std::string& path) {
  std::vector<std::uint8_t> bytes = detail::read_file(path);
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b)
    bytes = detail::gunzip(bytes, path);

  if (bytes.size() < 4)
    throw DataError(path + ": truncated IDX header, expected 16 bytes, got " +
                    std::to_string(bytes.size()));
  const std::uint32_t magic = detail::read_be32(bytes.data());
  if (magic != 0x00000803) {
    char buf[96];
    std::snprintf(buf, sizeof buf, ": expected image magic 0x00000803, got 0x%08x at offset 0",
                  magic);
    throw DataError(path + buf);
  }
  if (bytes.size() < 16)
    throw DataError(path + ": truncated IDX header, expected 16 bytes, got " +
                    std::to_string(bytes.size()));
  const std::uint32_t n = detail::read_be32(bytes.data() + 4);
  const std::uint32_t h = detail::read_be32(bytes.data() + 8);
  const std::uint32_t w = detail::read_be32(bytes.data() + 12);
  if (h != MnistSet::rows || w != MnistSet::cols)
    throw DataError(path + ": dimension mismatch at offset 8, expected 28x28, got " +
                    std::to_string(h) + "x" + std::to_string(w));
  const std::size_t expected = 16 + std::size_t(n) * MnistSet::image_bytes;
  if (bytes.size() != expected)
    throw DataError(path + ": expected " + std::to_string(expected) + " bytes, got " +
                    std::to_string(bytes.size()));

  MnistSet set;
  set.count = n;
  set.images.assign(bytes.begin() + 16, bytes.end());
  set.checksum = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
  return set;
}

inline void write_idx(const std::string& path, const std::vector<std::uint8_t>& images,
                      std::size_t count) {
  if (images.size() != count * MnistSet::image_bytes)
    throw DataError("write_idx: image buffer does not match count");
  std::uint8_t header[16];
  detail::write_be32(0x00000803, header);
  detail::write_be32(static_cast<std::uint32_t>(count), header + 4);
  detail::write_be32(28, header + 8);
  detail::write_be32(28, header + 12);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(header), 16);
  out.write(reinterpret_cast<const char*>(images.data()),
            static_cast<std::streamsize>(images.size()));
}

// ---------------------------------------------------------------------------
// Normalization and corruption
// ---------------------------------------------------------------------------

template <typename S>
Tensor<S> normalize(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != MnistSet::image_bytes)
    throw ShapeError("normalize expects 784 bytes, got " + std::to_string(bytes.size()));
  Tensor<S> img({MnistSet::rows, MnistSet::cols});
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = S(bytes[i]) / S(255);
  return img;
}

/// The destruction pipeline: blank the lower rows, then salt-and-pepper over
/// the whole image (blanked rows included). Density is the per-pixel
/// replacement probability; replacements are 1.0 or 0.0 with equal odds.
struct CorruptionSpec {
  std::size_t blank_row_start = 14;
  std::size_t blank_row_end = 27;  // inclusive
  double noise_density = 0.2;
  std::uint64_t seed = 0;

  void validate() const {
    if (blank_row_start > blank_row_end || blank_row_end > 27)
      throw UsageError("blank row range must lie within [0,27]");
    if (noise_density < 0.0 || noise_density > 1.0)
      throw UsageError("noise density must lie in [0,1]");
  }
};

/// Stage order is exactly blank-then-noise. The input is never modified.
template <typename S>
Tensor<S> corrupt(const Tensor<S>& image, const CorruptionSpec& spec, Rng& rng) {
  spec.validate();
  Tensor<S> out = image;
  const std::size_t w = out.shape.back();
  for (std::size_t r = spec.blank_row_start; r <= spec.blank_row_end; ++r)
    for (std::size_t c = 0; c < w; ++c) out.data[r * w + c] = S(0);
  for (std::size_t i = 0; i < out.numel(); ++i)
    if (uniform(rng) < spec.noise_density) out.data[i] = uniform(rng) < 0.5 ? S(1) : S(0);
  return out;
}

// ---------------------------------------------------------------------------
// Split and batching
// ---------------------------------------------------------------------------

struct SplitSpec {
  double train_fraction = 0.75;
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<std::uint32_t> train, test;
};

/// Deterministic disjoint-and-exhaustive partition; |train| = round(f*N).
inline Split split(const MnistSet& set, const SplitSpec& spec) {
  if (set.count < 2) throw DataError("split needs at least 2 images");
  std::vector<std::uint32_t> idx(set.count);
  for (std::size_t i = 0; i < set.count; ++i) idx[i] = static_cast<std::uint32_t>(i);
  Rng rng(spec.seed);
  shuffle_in_place(idx, rng);
  const auto train_n = static_cast<std::size_t>(
      std::llround(spec.train_fraction * static_cast<double>(set.count)));
  Split s;
  s.train.assign(idx.begin(), idx.begin() + train_n);
  s.test.assign(idx.begin() + train_n, idx.end());
  return s;
}

template <typename S>
struct SamplePair {
  Tensor<S> corrupted;
  Tensor<S> clean;
};

/// Serves shuffled batches of (corrupted, clean) pairs. Corruption is
/// re-sampled every time an image is drawn, so revisits see fresh noise;
/// the clean target is always the stored original. Partial tail batches are
/// dropped and the epoch reshuffles.
template <typename S>
class BatchStream {
 public:
  struct State {
    std::string rng;
    std::vector<std::uint32_t> permutation;
    std::uint64_t cursor = 0;
  };

  BatchStream(const MnistSet& set, std::vector<std::uint32_t> indices, std::size_t batch_size,
              CorruptionSpec spec, std::uint64_t seed)
      : set_(&set),
        indices_(std::move(indices)),
        batch_size_(batch_size),
        spec_(spec),
        rng_(seed) {
    if (batch_size_ == 0) throw UsageError("batch size must be >= 1");
    if (indices_.empty() || batch_size_ > indices_.size())
      throw UsageError("batch size " + std::to_string(batch_size_) + " exceeds pool of " +
                       std::to_string(indices_.size()) + " images");
    spec_.validate();
    permutation_ = indices_;
    shuffle_in_place(permutation_, rng_);
  }

  std::size_t batches_per_epoch() const { return indices_.size() / batch_size_; }

  std::vector<SamplePair<S>> next() {
    if (cursor_ + batch_size_ > permutation_.size()) {
      permutation_ = indices_;
      shuffle_in_place(permutation_, rng_);
      cursor_ = 0;
    }
    std::vector<SamplePair<S>> batch;
    batch.reserve(batch_size_);
    for (std::size_t i = 0; i < batch_size_; ++i) {
      const std::uint32_t img = permutation_[cursor_ + i];
      Tensor<S> clean = normalize<S>(set_->image(img));
      Tensor<S> corrupted = corrupt(clean, spec_, rng_);
      batch.push_back(SamplePair<S>{std::move(corrupted), std::move(clean)});
    }
    cursor_ += batch_size_;
    return batch;
  }

  State state() const { return State{rng_state_string(rng_), permutation_, cursor_}; }

  void set_state(const State& s) {
    rng_ = rng_from_state_string(s.rng);
    permutation_ = s.permutation;
    cursor_ = s.cursor;
  }

 private:
  const MnistSet* set_;
  std::vector<std::uint32_t> indices_;
  std::size_t batch_size_;
  CorruptionSpec spec_;
  Rng rng_;
  std::vector<std::uint32_t> permutation_;
  std::uint64_t cursor_ = 0;
};

/// Stacks a batch of pairs into [B,1,28,28] model inputs/targets.
template <typename S>
std::pair<Tensor<S>, Tensor<S>> pack_batch(const std::vector<SamplePair<S>>& batch) {
  const std::size_t b = batch.size();
  Tensor<S> corrupted({b, 1, MnistSet::rows, MnistSet::cols});
  Tensor<S> clean({b, 1, MnistSet::rows, MnistSet::cols});
  for (std::size_t i = 0; i < b; ++i) {
    std::copy(batch[i].corrupted.data.begin(), batch[i].corrupted.data.end(),
              corrupted.ptr() + i * MnistSet::image_bytes);
    std::copy(batch[i].clean.data.begin(), batch[i].clean.data.end(),
              clean.ptr() + i * MnistSet::image_bytes);
  }
  return {std::move(corrupted), std::move(clean)};
}

// ---------------------------------------------------------------------------
// PGM (P5) image I/O
// ---------------------------------------------------------------------------

template <typename S>
void write_pgm(const std::string& path, const Tensor<S>& image) {
  if (image.rank() != 2) throw ShapeError("write_pgm expects [H,W], got " + shape_str(image.shape));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "P5\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
  for (S v : image.data) {
    double q = std::lround(static_cast<double>(v) * 255.0);
    q = q < 0 ? 0 : (q > 255 ? 255 : q);
    out.put(static_cast<char>(static_cast<std::uint8_t>(q)));
  }
}

template <typename S>
Tensor<S> read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw DataError(path + ": not a P5 PGM file");
  std::size_t w = 0, h = 0, maxval = 0;
  in >> w >> h >> maxval;
  if (!in || maxval != 255) throw DataError(path + ": unsupported PGM header");
  in.get();  // single whitespace after header
  Tensor<S> img({h, w});
  for (std::size_t i = 0; i < img.numel(); ++i) {
    int c = in.get();
    if (c == EOF) throw DataError(path + ": truncated PGM payload");
    img.data[i] = S(c) / S(255);
  }
  return img;
}

}  // namespace restore
