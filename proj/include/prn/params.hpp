#pragma once

// Named parameter bags and the binary checkpoint format.
//
// Checkpoint layout (little-endian):
//   "PRNW" | u32 version = 1 | u32 tensor count
//   per tensor: u16 name length | UTF-8 name | u8 rank | rank x u32 dims | raw f32 data

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "prn/errors.hpp"
#include "prn/rng.hpp"
#include "prn/tensor.hpp"

namespace prn {

struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  bool operator==(const NamedArray&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}
inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(const std::string& s) : s_(s) {}
  std::uint32_t u(int bytes) {
    need(static_cast<std::size_t>(bytes));
    std::uint32_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s_[pos_++])) << (8 * i);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string r = s_.substr(pos_, n);
    pos_ += n;
    return r;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > s_.size()) throw IoError("checkpoint truncated");
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const std::vector<NamedArray>& arrays) {
  std::string out = "PRNW";
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& a : arrays) {
    if (a.name.size() > 0xFFFF) throw ArgumentError("checkpoint: tensor name too long");
    if (a.dims.size() > 0xFF) throw ArgumentError("checkpoint: rank too large");
    std::size_t count = 1;
    for (auto d : a.dims) count *= d;
    if (count != a.values.size()) throw DimensionError("checkpoint: " + a.name + " dims do not match data");
    detail::put_u16(out, static_cast<std::uint16_t>(a.name.size()));
    out += a.name;
    out.push_back(static_cast<char>(a.dims.size()));
    for (auto d : a.dims) detail::put_u32(out, d);
    for (float v : a.values) {
      std::uint32_t bits = 0;
      std::memcpy(&bits, &v, sizeof bits);
      detail::put_u32(out, bits);
    }
  }
  return out;
}

inline std::vector<NamedArray> decode_checkpoint(const std::string& bytes) {
  detail::ByteReader r(bytes);
  if (r.str(4) != "PRNW") throw IoError("checkpoint: bad magic");
  const std::uint32_t version = r.u(4);
  if (version != kCheckpointVersion) throw IoError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u(4);
  std::vector<NamedArray> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedArray a;
    a.name = r.str(r.u(2));
    const std::uint32_t rank = r.u(1);
    std::size_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      a.dims.push_back(r.u(4));
      n *= a.dims.back();
    }
    a.values.resize(n);
    for (auto& v : a.values) {
      const std::uint32_t bits = r.u(4);
      std::memcpy(&v, &bits, sizeof v);
    }
    out.push_back(std::move(a));
  }
  if (!r.done()) throw IoError("checkpoint: trailing bytes");
  return out;
}

inline void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  const std::string bytes = encode_checkpoint(arrays);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("short write to " + path.string());
}

inline std::vector<NamedArray> read_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

inline const NamedArray* find_array(const std::vector<NamedArray>& arrays, const std::string& name) {
  auto it = std::find_if(arrays.begin(), arrays.end(), [&](const NamedArray& a) { return a.name == name; });
  return it == arrays.end() ? nullptr : &*it;
}

// Ordered collection of trainable tensors with hierarchical names
// ("prcnn.prb3.dense1.w"). Registration order is the serialization order.
template <typename T>
class ParamBag {
 public:
  struct Entry {
    std::string name;
    std::vector<std::uint32_t> dims;
    Tensor<T> tensor;
  };

  Tensor<T> add(const std::string& name, std::vector<std::uint32_t> dims, Shape shape) {
    if (index_.count(name)) throw ArgumentError("duplicate parameter name " + name);
    Tensor<T> t(shape);
    t.set_requires_grad(true);
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, std::move(dims), t});
    return t;
  }

  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ArgumentError("unknown parameter " + name);
    return entries_[it->second].tensor;
  }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    for (const auto& e : entries_) out.push_back(e.tensor);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.size();
    return n;
  }

  std::vector<NamedArray> to_arrays() const {
    std::vector<NamedArray> out;
    for (const auto& e : entries_) {
      NamedArray a{e.name, e.dims, {}};
      a.values.reserve(e.tensor.size());
      for (T v : e.tensor.data()) a.values.push_back(static_cast<float>(v));
      out.push_back(std::move(a));
    }
    return out;
  }

  // Copies values for every registered parameter; all must be present with
  // matching dims.
  void load(const std::vector<NamedArray>& arrays) {
    for (auto& e : entries_) {
      const NamedArray* a = find_array(arrays, e.name);
      if (!a) throw IoError("checkpoint is missing parameter " + e.name);
      if (a->dims != e.dims) throw DimensionError("checkpoint parameter " + e.name + " has mismatched dims");
      auto d = e.tensor.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = static_cast<T>(a->values[i]);
    }
  }

  void fill(T v) {
    for (auto& e : entries_) std::fill(e.tensor.data().begin(), e.tensor.data().end(), v);
  }

  void zero_grad() {
    for (auto& e : entries_) e.tensor.clear_grad();
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
struct Conv2d {
  Tensor<T> weight;
  Tensor<T> bias;
  int kernel = 3;
  std::size_t in = 0;
  std::size_t out = 0;

  Tensor<T> operator()(Graph<T>& g, const Tensor<T>& x) const { return conv2d(g, x, weight, bias, kernel); }
};

// Registers "<name>.w" [out, in, k, k] and "<name>.b" [out]. Weights are
// uniform in +-sqrt(1 / (in * k * k)), biases zero.
template <typename T>
Conv2d<T> make_conv(ParamBag<T>& bag, const std::string& name, std::size_t in, std::size_t out, int kernel,
                    Rng& rng) {
  const auto k = static_cast<std::size_t>(kernel);
  Conv2d<T> c;
  c.kernel = kernel;
  c.in = in;
  c.out = out;
  c.weight = bag.add(name + ".w",
                     {static_cast<std::uint32_t>(out), static_cast<std::uint32_t>(in), static_cast<std::uint32_t>(k),
                      static_cast<std::uint32_t>(k)},
                     Shape{out, in, k, k});
  c.bias = bag.add(name + ".b", {static_cast<std::uint32_t>(out)}, Shape{out, 1, 1, 1});
  const double bound = std::sqrt(1.0 / static_cast<double>(in * k * k));
  for (auto& v : c.weight.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return c;
}

}  // namespace prn
