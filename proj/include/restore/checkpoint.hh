#pragma once

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "restore/tensor.hh"

namespace restore {

// Checkpoint container, "RSTF" format version 1. Little-endian throughout.
//
//   offset  size  field
//   0       4     magic "RSTF"
//   4       4     u32 format version (1)
//   8       4     u32 model kind (1 = cnn-lstm, 2 = cnn-cnn)
//   12      4     u32 scalar width in bytes (4 = single, 8 = double)
//   16      8     u64 config length, then that many bytes of config JSON
//   ...     8     u64 record count
//
// Each record:
//   u64 name length | name bytes | u8 kind (0 = tensor, 1 = blob)
//   tensor: u32 rank | u64 dims[rank] | dim-product * scalar-width bytes
//   blob:   u64 length | bytes
//
// Tensors hold parameters and optimizer moments; blobs hold rng engine
// states, the stream permutation, counters and the loss log, which together
// make a resumed run bit-identical to an uninterrupted one.

enum class ModelKind : std::uint32_t { CnnLstm = 1, CnnCnn = 2 };

inline const char* model_kind_name(ModelKind k) {
  return k == ModelKind::CnnLstm ? "cnn-lstm" : "cnn-cnn";
}

struct CheckpointData {
  static constexpr std::uint32_t current_version = 1;

  std::uint32_t version = current_version;
  ModelKind model_kind = ModelKind::CnnLstm;
  std::uint32_t scalar_width = 4;
  std::string config_json;

  struct Record {
    std::string name;
    bool is_tensor = false;
    Shape shape;                      // tensors only
    std::vector<std::uint8_t> bytes;  // tensor payload or blob
  };
  std::vector<Record> records;

  const Record* find(const std::string& name) const {
    for (const auto& r : records)
      if (r.name == name) return &r;
    return nullptr;
  }

  template <typename S>
  void add_tensor(const std::string& name, const Tensor<S>& t) {
    if (sizeof(S) != scalar_width)
      throw DataError("checkpoint scalar width mismatch while adding " + name);
    Record r;
    r.name = name;
    r.is_tensor = true;
    r.shape = t.shape;
    r.bytes.resize(t.numel() * sizeof(S));
    std::memcpy(r.bytes.data(), t.ptr(), r.bytes.size());
    records.push_back(std::move(r));
  }

  void add_blob(const std::string& name, const std::string& data) {
    Record r;
    r.name = name;
    r.bytes.assign(data.begin(), data.end());
    records.push_back(std::move(r));
  }

  template <typename S>
  Tensor<S> tensor(const std::string& name) const {
    const Record* r = find(name);
    if (!r || !r->is_tensor) throw DataError("checkpoint is missing tensor " + name);
    if (sizeof(S) != scalar_width)
      throw DataError("checkpoint scalar width " + std::to_string(scalar_width) +
                      " does not match requested type for " + name);
    Tensor<S> t(r->shape);
    std::memcpy(t.ptr(), r->bytes.data(), r->bytes.size());
    return t;
  }

  std::string blob(const std::string& name) const {
    const Record* r = find(name);
    if (!r || r->is_tensor) throw DataError("checkpoint is missing blob " + name);
    return std::string(r->bytes.begin(), r->bytes.end());
  }

  bool has(const std::string& name) const { return find(name) != nullptr; }
};

namespace detail {

template <typename T>
void put_le(std::string& out, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i)
    out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return static_cast<T>(v);
}

struct ByteReader {
  const std::uint8_t* p;
  std::size_t remaining;
  std::string path;

  void need(std::size_t n) const {
    if (n > remaining) throw DataError(path + ": truncated checkpoint");
  }
  template <typename T>
  T scalar() {
    need(sizeof(T));
    T v = get_le<T>(p);
    p += sizeof(T);
    remaining -= sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    remaining -= n;
    return s;
  }
};

}  // namespace detail

inline void save_checkpoint(const std::string& path, const CheckpointData& ckpt) {
  std::string out;
  out += "RSTF";
  detail::put_le<std::uint32_t>(out, ckpt.version);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.model_kind));
  detail::put_le<std::uint32_t>(out, ckpt.scalar_width);
  detail::put_le<std::uint64_t>(out, ckpt.config_json.size());
  out += ckpt.config_json;
  detail::put_le<std::uint64_t>(out, ckpt.records.size());
  for (const auto& r : ckpt.records) {
    detail::put_le<std::uint64_t>(out, r.name.size());
    out += r.name;
    out.push_back(r.is_tensor ? '\0' : '\1');
    if (r.is_tensor) {
      detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(r.shape.size()));
      for (std::size_t d : r.shape) detail::put_le<std::uint64_t>(out, d);
    } else {
      detail::put_le<std::uint64_t>(out, r.bytes.size());
    }
    out.append(reinterpret_cast<const char*>(r.bytes.data()), r.bytes.size());
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write checkpoint " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw DataError("short write on checkpoint " + path);
}

inline CheckpointData load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open checkpoint " + path);
  std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                std::istreambuf_iterator<char>());
  detail::ByteReader r{buf.data(), buf.size(), path};
  if (r.bytes(4) != "RSTF") throw DataError(path + ": bad checkpoint magic, expected RSTF");
  CheckpointData ckpt;
  ckpt.version = r.scalar<std::uint32_t>();
  if (ckpt.version != CheckpointData::current_version)
    throw DataError(path + ": checkpoint version " + std::to_string(ckpt.version) +
                    " unsupported, this build reads version " +
                    std::to_string(CheckpointData::current_version));
  ckpt.model_kind = static_cast<ModelKind>(r.scalar<std::uint32_t>());
  ckpt.scalar_width = r.scalar<std::uint32_t>();
  ckpt.config_json = r.bytes(r.scalar<std::uint64_t>());
  const auto n_records = r.scalar<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_records; ++i) {
    CheckpointData::Record rec;
    rec.name = r.bytes(r.scalar<std::uint64_t>());
    rec.is_tensor = r.scalar<std::uint8_t>() == 0;
    std::size_t payload;
    if (rec.is_tensor) {
      const auto rank = r.scalar<std::uint32_t>();
      payload = ckpt.scalar_width;
      for (std::uint32_t d = 0; d < rank; ++d) {
        rec.shape.push_back(r.scalar<std::uint64_t>());
        payload *= rec.shape.back();
      }
    } else {
      payload = r.scalar<std::uint64_t>();
    }
    std::string data = r.bytes(payload);
    rec.bytes.assign(data.begin(), data.end());
    ckpt.records.push_back(std::move(rec));
  }
  return ckpt;
}

}  // namespace restore
