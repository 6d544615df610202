#pragma once

// PR-CNN: single-frame restoration guided by MM-CU side information.

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "prn/errors.hpp"
#include "prn/nn/prb.hpp"
#include "prn/params.hpp"
#include "prn/sideinfo.hpp"
#include "prn/tensor.hpp"

namespace prn {

struct PrcnnConfig {
  PrbWidths widths;
  std::size_t blocks = 10;  // D
  // 1-based PRB index after which SF_k is added, k = 0 for the finest map
  // (level 3) up to k = 3 for the coarsest (level 0).
  std::array<std::size_t, kMmcuLevels> fusion_after{2, 4, 6, 8};
  // Adds the network input to the reconstruction. Off reproduces the
  // literal x_hat = P_Rec(F_C').
  bool input_skip = false;

  void validate() const {
    widths.validate();
    if (blocks == 0) throw ArgumentError("PR-CNN needs at least one PRB");
    for (auto n : fusion_after) {
      if (n < 1 || n > blocks) {
        throw ArgumentError("fusion point " + std::to_string(n) + " outside 1.." + std::to_string(blocks));
      }
    }
  }
};

// Side Information Feature Extractor: conv -> two PRBs -> residual -> conv.
template <typename T>
class Sife {
 public:
  Sife() = default;

  static Sife create(ParamBag<T>& bag, const std::string& name, const PrbWidths& w, Rng& rng) {
    Sife s;
    s.head_ = make_conv(bag, name + ".head", 1, w.features, 3, rng);
    s.memory_init_ = MemoryInit<T>::create(bag, name + ".m0", w, rng);
    for (int i = 1; i <= 2; ++i) s.blocks_.push_back(Prb<T>::create(bag, name + ".prb" + std::to_string(i), w, rng));
    s.tail_ = make_conv(bag, name + ".tail", w.features, w.features, 3, rng);
    return s;
  }

  Tensor<T> forward(Graph<T>& g, const Tensor<T>& map) const {
    if (map.shape().c != 1) throw DimensionError("SIFE expects a single-channel map");
    const Tensor<T> h = head_(g, map);
    const auto o = run_prbs(g, blocks_, h, memory_init_(g, h));
    return tail_(g, add(g, o.feature, h));
  }

  static std::size_t parameter_count(const PrbWidths& w) {
    return (9 * w.features + w.features) + MemoryInit<T>::parameter_count(w) + 2 * Prb<T>::parameter_count(w) +
           (9 * w.features * w.features + w.features);
  }

 private:
  Conv2d<T> head_;
  MemoryInit<T> memory_init_;
  std::vector<Prb<T>> blocks_;
  Conv2d<T> tail_;
};

template <typename T>
class Prcnn {
 public:
  explicit Prcnn(const PrcnnConfig& cfg, std::uint64_t seed = 1) : cfg_(cfg) {
    cfg.validate();
    Rng rng(seed);
    const auto& w = cfg.widths;
    lfe1_ = make_conv(bag_, "prcnn.lfe1", 1, w.features, 3, rng);
    lfe2_ = make_conv(bag_, "prcnn.lfe2", w.features, w.features, 3, rng);
    memory_init_ = MemoryInit<T>::create(bag_, "prcnn.m0", w, rng);
    for (std::size_t d = 1; d <= cfg.blocks; ++d) {
      blocks_.push_back(Prb<T>::create(bag_, "prcnn.prb" + std::to_string(d), w, rng));
    }
    for (int k = 0; k < kMmcuLevels; ++k) {
      sife_[static_cast<std::size_t>(k)] = Sife<T>::create(bag_, "prcnn.sife" + std::to_string(k + 1), w, rng);
    }
    compress_ = make_conv(bag_, "prcnn.compress", cfg.blocks * w.features, w.features, 1, rng);
    rec_ = make_conv(bag_, "prcnn.rec", w.features, 1, 3, rng);
    // With the input skip the network starts as the identity and learns a
    // correction.
    if (cfg.input_skip) std::fill(rec_.weight.data().begin(), rec_.weight.data().end(), T(0));
  }

  const PrcnnConfig& config() const { return cfg_; }
  ParamBag<T>& params() { return bag_; }
  const ParamBag<T>& params() const { return bag_; }

  // x: [N,1,H,W] in [0,1]; maps[l]: MM-CU level l (0 = coarsest) in [0,1].
  Tensor<T> forward(Graph<T>& g, const Tensor<T>& x, const std::array<Tensor<T>, kMmcuLevels>& maps) const {
    if (x.shape().c != 1) throw DimensionError("PR-CNN expects a single-channel input");
    for (const auto& m : maps) {
      if (m.shape() != x.shape()) {
        throw DimensionError("MM-CU map " + m.shape().str() + " does not match input " + x.shape().str());
      }
    }
    std::array<Tensor<T>, kMmcuLevels> side;
    for (std::size_t k = 0; k < side.size(); ++k) {
      side[k] = sife_[k].forward(g, maps[kMmcuLevels - 1 - k]);  // finest first
    }
    const Tensor<T> fg = lfe1_(g, x);
    Tensor<T> f = lfe2_(g, fg);
    Tensor<T> m = memory_init_(g, f);
    std::vector<Tensor<T>> stage;
    for (std::size_t d = 1; d <= blocks_.size(); ++d) {
      auto o = blocks_[d - 1].forward(g, f, m);
      f = o.feature;
      m = o.memory;
      for (std::size_t k = 0; k < side.size(); ++k) {
        if (cfg_.fusion_after[k] == d) f = add(g, f, side[k]);
      }
      stage.push_back(f);
    }
    const Tensor<T> fc = add(g, compress_(g, concat_channels(g, stage)), fg);
    Tensor<T> out = rec_(g, fc);
    if (cfg_.input_skip) out = add(g, out, x);
    return out;
  }

  static std::size_t parameter_count(const PrcnnConfig& c) {
    const auto& w = c.widths;
    return (9 * w.features + w.features) + (9 * w.features * w.features + w.features) +
           MemoryInit<T>::parameter_count(w) + c.blocks * Prb<T>::parameter_count(w) +
           kMmcuLevels * Sife<T>::parameter_count(w) + (c.blocks * w.features * w.features + w.features) +
           (9 * w.features + 1);
  }

  NamedArray meta() const {
    NamedArray a{"meta.prcnn", {10}, {}};
    const auto& w = cfg_.widths;
    for (std::size_t v : {w.features, w.memory, w.growth, w.layers, cfg_.blocks, cfg_.fusion_after[0],
                          cfg_.fusion_after[1], cfg_.fusion_after[2], cfg_.fusion_after[3]}) {
      a.values.push_back(static_cast<float>(v));
    }
    a.values.push_back(cfg_.input_skip ? 1.0f : 0.0f);
    return a;
  }

  static PrcnnConfig config_from_meta(const NamedArray& a) {
    if (a.name != "meta.prcnn" || a.values.size() != 10) throw IoError("checkpoint has no PR-CNN metadata");
    auto u = [&](std::size_t i) { return static_cast<std::size_t>(a.values[i]); };
    PrcnnConfig c;
    c.widths = PrbWidths{u(0), u(1), u(2), u(3)};
    c.blocks = u(4);
    c.fusion_after = {u(5), u(6), u(7), u(8)};
    c.input_skip = a.values[9] != 0.0f;
    return c;
  }

  static Prcnn from_arrays(const std::vector<NamedArray>& arrays) {
    const NamedArray* meta = find_array(arrays, "meta.prcnn");
    if (!meta) throw IoError("checkpoint has no PR-CNN metadata");
    Prcnn model(config_from_meta(*meta));
    model.bag_.load(arrays);
    return model;
  }

 private:
  PrcnnConfig cfg_;
  ParamBag<T> bag_;
  Conv2d<T> lfe1_, lfe2_;
  MemoryInit<T> memory_init_;
  std::vector<Prb<T>> blocks_;
  std::array<Sife<T>, kMmcuLevels> sife_;
  Conv2d<T> compress_;
  Conv2d<T> rec_;
};

}  // namespace prn
