// Versioned binary checkpoint: a text header of key=value lines plus a named
// list of tensors.
//
// Layout (all integers little-endian):
//   char[8]   magic "SRCYCKPT"
//   u32       format version (kCheckpointVersion)
//   u32       header byte length, then that many bytes of "key=value\n" lines
//   u64       tensor count
//   per tensor:
//     u32     name byte length, then the UTF-8 name (dotted layer path)
//     u8      dtype (1 = float32, 2 = float64)
//     u32     rank, then rank x i64 dimensions
//     raw     prod(dims) little-endian values of the dtype
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "srcyc/layers.hpp"

namespace srcyc {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline constexpr char kCheckpointMagic[8] = {'S', 'R', 'C', 'Y', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class DType : std::uint8_t { f32 = 1, f64 = 2 };

template <class T>
constexpr DType dtype_of() {
  static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
  return std::is_same_v<T, float> ? DType::f32 : DType::f64;
}

struct TensorRecord {
  std::string name;
  DType dtype = DType::f32;
  Shape shape;
  std::vector<char> bytes;

  template <class T>
  static TensorRecord from(std::string name, const Tensor<T>& t) {
    TensorRecord r{std::move(name), dtype_of<T>(), t.shape(), {}};
    r.bytes.resize(t.size() * sizeof(T));
    std::memcpy(r.bytes.data(), t.data(), r.bytes.size());
    return r;
  }

  /// Converts to T regardless of the stored dtype.
  template <class T>
  Tensor<T> as() const {
    Tensor<T> out(shape);
    const std::size_t n = out.size();
    if (dtype == DType::f32) {
      std::vector<float> v(n);
      std::memcpy(v.data(), bytes.data(), n * sizeof(float));
      for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(v[i]);
    } else {
      std::vector<double> v(n);
      std::memcpy(v.data(), bytes.data(), n * sizeof(double));
      for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(v[i]);
    }
    return out;
  }
};

class Checkpoint {
 public:
  std::map<std::string, std::string> header;

  template <class T>
  void add(std::string name, const Tensor<T>& t) {
    tensors_.push_back(TensorRecord::from(std::move(name), t));
  }

  const TensorRecord* find(const std::string& name) const {
    for (const auto& r : tensors_)
      if (r.name == name) return &r;
    return nullptr;
  }

  const TensorRecord& get(const std::string& name) const {
    if (const auto* r = find(name)) return *r;
    throw CheckpointError("checkpoint has no tensor '" + name + "'");
  }

  const std::string& header_value(const std::string& key) const {
    auto it = header.find(key);
    if (it == header.end()) throw CheckpointError("checkpoint header has no key '" + key + "'");
    return it->second;
  }

  const std::vector<TensorRecord>& tensors() const noexcept { return tensors_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(path.string() + ": cannot open for writing");
    auto put = [&](const auto& v) { out.write(reinterpret_cast<const char*>(&v), sizeof(v)); };
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    put(kCheckpointVersion);
    std::string text;
    for (const auto& [k, v] : header) {
      if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos)
        throw CheckpointError("header entry '" + k + "' contains a reserved character");
      text += k + "=" + v + "\n";
    }
    put(static_cast<std::uint32_t>(text.size()));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    put(static_cast<std::uint64_t>(tensors_.size()));
    for (const auto& r : tensors_) {
      put(static_cast<std::uint32_t>(r.name.size()));
      out.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
      put(static_cast<std::uint8_t>(r.dtype));
      put(static_cast<std::uint32_t>(r.shape.size()));
      for (int d : r.shape) put(static_cast<std::int64_t>(d));
      out.write(r.bytes.data(), static_cast<std::streamsize>(r.bytes.size()));
    }
    if (!out) throw CheckpointError(path.string() + ": write failed");
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(path.string() + ": cannot open checkpoint");
    auto get = [&](auto& v) {
      in.read(reinterpret_cast<char*>(&v), sizeof(v));
      if (!in) throw CheckpointError(path.string() + ": truncated checkpoint");
    };
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
      throw CheckpointError(path.string() + ": not a checkpoint file");
    std::uint32_t version = 0;
    get(version);
    if (version != kCheckpointVersion)
      throw CheckpointError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    Checkpoint ck;
    std::uint32_t header_len = 0;
    get(header_len);
    std::string text(header_len, '\0');
    in.read(text.data(), header_len);
    std::istringstream lines(text);
    for (std::string line; std::getline(lines, line);) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw CheckpointError(path.string() + ": malformed header line");
      ck.header[line.substr(0, eq)] = line.substr(eq + 1);
    }
    std::uint64_t count = 0;
    get(count);
    for (std::uint64_t i = 0; i < count; ++i) {
      TensorRecord r;
      std::uint32_t name_len = 0;
      get(name_len);
      r.name.resize(name_len);
      in.read(r.name.data(), name_len);
      std::uint8_t dtype = 0;
      get(dtype);
      if (dtype != 1 && dtype != 2) throw CheckpointError(path.string() + ": unknown dtype in '" + r.name + "'");
      r.dtype = static_cast<DType>(dtype);
      std::uint32_t rank = 0;
      get(rank);
      for (std::uint32_t d = 0; d < rank; ++d) {
        std::int64_t dim = 0;
        get(dim);
        r.shape.push_back(static_cast<int>(dim));
      }
      r.bytes.resize(numel(r.shape) * (r.dtype == DType::f32 ? 4 : 8));
      in.read(r.bytes.data(), static_cast<std::streamsize>(r.bytes.size()));
      if (!in) throw CheckpointError(path.string() + ": truncated tensor '" + r.name + "'");
      ck.tensors_.push_back(std::move(r));
    }
    return ck;
  }

 private:
  std::vector<TensorRecord> tensors_;
};

template <class T>
void save_store(Checkpoint& ck, const std::string& prefix, const ParameterStore<T>& store) {
  for (const auto& [name, v] : store.parameters()) ck.add(prefix + name, v.value());
  for (const auto& b : store.buffers()) ck.add(prefix + b.name, *b.tensor);
}

/// Copies tensors into an existing store; every entry must be present with a
/// matching shape.
template <class T>
void load_store(const Checkpoint& ck, const std::string& prefix, ParameterStore<T>& store) {
  auto assign = [&](const std::string& name, Tensor<T>& dst) {
    const TensorRecord& r = ck.get(prefix + name);
    if (r.shape != dst.shape())
      throw CheckpointError("shape mismatch for '" + prefix + name + "': checkpoint " + to_string(r.shape) +
                            ", model " + to_string(dst.shape()));
    dst = r.as<T>();
  };
  // Var copies share their node, so writing through the copy updates the store.
  for (auto [name, v] : store.parameters()) assign(name, v.mutable_value());
  for (const auto& b : store.buffers()) assign(b.name, *b.tensor);
}

}  // namespace srcyc
