#pragma once

// Progressive Rethinking Block: a residual dense block with an extra
// uncompressed memory path carried from block to block.
//
//   G_d = [F_{d-1}, h_1, ..., h_L]     h_i = relu(conv3x3([F_{d-1}, h_1..h_{i-1}]))
//   M_d = P_M([G_d, M_{d-1}])          1x1
//   F_d = P_F([G_d, M_d]) + F_{d-1}    1x1, local residual

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "prn/errors.hpp"
#include "prn/params.hpp"
#include "prn/tensor.hpp"

namespace prn {

struct PrbWidths {
  std::size_t features = 64;  // C
  std::size_t memory = 128;   // M_ch
  std::size_t growth = 32;    // G
  std::size_t layers = 4;     // L

  std::size_t dense_width() const { return features + layers * growth; }

  void validate() const {
    if (features == 0 || memory == 0 || growth == 0 || layers == 0) {
      throw ArgumentError("PRB widths must all be positive");
    }
  }
};

inline constexpr PrbWidths kToyWidths{16, 32, 8, 2};

template <typename T>
struct PrbOutput {
  Tensor<T> feature;
  Tensor<T> memory;
};

template <typename T>
class Prb {
 public:
  Prb() = default;

  static Prb create(ParamBag<T>& bag, const std::string& name, const PrbWidths& w, Rng& rng) {
    w.validate();
    Prb p;
    p.widths_ = w;
    for (std::size_t i = 0; i < w.layers; ++i) {
      p.dense_.push_back(
          make_conv(bag, name + ".dense" + std::to_string(i + 1), w.features + i * w.growth, w.growth, 3, rng));
    }
    const std::size_t cat = w.dense_width() + w.memory;
    p.to_memory_ = make_conv(bag, name + ".pm", cat, w.memory, 1, rng);
    p.to_feature_ = make_conv(bag, name + ".pf", cat, w.features, 1, rng);
    return p;
  }

  const PrbWidths& widths() const { return widths_; }

  PrbOutput<T> forward(Graph<T>& g, const Tensor<T>& f_prev, const Tensor<T>& m_prev) const {
    if (f_prev.shape().c != widths_.features || m_prev.shape().c != widths_.memory) {
      throw DimensionError("PRB expects (" + std::to_string(widths_.features) + ", " +
                           std::to_string(widths_.memory) + ") channels, got (" +
                           std::to_string(f_prev.shape().c) + ", " + std::to_string(m_prev.shape().c) + ")");
    }
    std::vector<Tensor<T>> feats{f_prev};
    for (const auto& conv : dense_) {
      const Tensor<T> in = feats.size() == 1 ? f_prev : concat_channels(g, feats);
      feats.push_back(relu(g, conv(g, in)));
    }
    const Tensor<T> dense = concat_channels(g, feats);
    PrbOutput<T> out;
    out.memory = to_memory_(g, concat_channels(g, {dense, m_prev}));
    out.feature = add(g, to_feature_(g, concat_channels(g, {dense, out.memory})), f_prev);
    return out;
  }

  // Independent closed form for the number of scalars in one PRB.
  static std::size_t parameter_count(const PrbWidths& w) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < w.layers; ++i) n += (w.features + i * w.growth) * w.growth * 9 + w.growth;
    const std::size_t cat = w.dense_width() + w.memory;
    n += cat * w.memory + w.memory;
    n += cat * w.features + w.features;
    return n;
  }

 private:
  PrbWidths widths_;
  std::vector<Conv2d<T>> dense_;
  Conv2d<T> to_memory_;
  Conv2d<T> to_feature_;
};

// Initial memory M_0 from a feature F_0: identity when the widths agree,
// otherwise a dedicated 1x1 projection.
template <typename T>
class MemoryInit {
 public:
  MemoryInit() = default;

  static MemoryInit create(ParamBag<T>& bag, const std::string& name, const PrbWidths& w, Rng& rng) {
    MemoryInit m;
    if (w.memory != w.features) m.proj_ = make_conv(bag, name, w.features, w.memory, 1, rng);
    return m;
  }

  Tensor<T> operator()(Graph<T>& g, const Tensor<T>& f0) const { return proj_ ? (*proj_)(g, f0) : f0; }

  static std::size_t parameter_count(const PrbWidths& w) {
    return w.memory == w.features ? 0 : w.features * w.memory + w.memory;
  }

 private:
  std::optional<Conv2d<T>> proj_;
};

// Runs a chain of PRBs starting from (f, m).
template <typename T>
PrbOutput<T> run_prbs(Graph<T>& g, const std::vector<Prb<T>>& blocks, Tensor<T> f, Tensor<T> m) {
  for (const auto& b : blocks) {
    auto o = b.forward(g, f, m);
    f = o.feature;
    m = o.memory;
  }
  return {f, m};
}

}  // namespace prn
