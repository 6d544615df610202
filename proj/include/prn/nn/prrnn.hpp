#pragma once

// PR-RNN: three recurrent states (C = current frame, N = nearest filtered
// neighbour, Q = peak-quality frame) updated jointly by the Collaborative
// Learning Module for T unfolding steps.

#include <algorithm>
#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "prn/errors.hpp"
#include "prn/nn/flow.hpp"
#include "prn/nn/prb.hpp"
#include "prn/params.hpp"
#include "prn/tensor.hpp"

namespace prn {

enum StateIndex : std::size_t { kStateC = 0, kStateN = 1, kStateQ = 2 };
inline constexpr std::size_t kStates = 3;
inline constexpr std::array<const char*, kStates> kStateNames{"C", "N", "Q"};

// flow[i][j] = flow_{i->j}: warps state i's features onto state j.
template <typename T>
struct StateFlows {
  std::array<std::array<Tensor<T>, kStates>, kStates> flow;
};

template <typename T>
StateFlows<T> zero_flows(const Shape& frame) {
  StateFlows<T> f;
  for (std::size_t i = 0; i < kStates; ++i)
    for (std::size_t j = 0; j < kStates; ++j)
      if (i != j) f.flow[i][j] = Tensor<T>(Shape{frame.n, 2, frame.h, frame.w});
  return f;
}

// The six directed flows, estimated once from pixels.
template <typename T>
StateFlows<T> estimate_state_flows(const std::array<Tensor<T>, kStates>& frames, const FlowParams& params) {
  StateFlows<T> f;
  for (std::size_t i = 0; i < kStates; ++i)
    for (std::size_t j = 0; j < kStates; ++j)
      if (i != j) f.flow[i][j] = estimate_flow_tensor(frames[i], frames[j], params);
  return f;
}

struct PrrnnConfig {
  PrbWidths widths;
  std::size_t blocks_per_state = 3;
  std::size_t unfold = 2;  // T
  bool input_skip = false;
  FlowParams flow;

  void validate() const {
    widths.validate();
    flow.validate();
    if (unfold < 1) throw ArgumentError("PR-RNN unfold count T must be >= 1");
    if (blocks_per_state < 1) throw ArgumentError("PR-RNN needs at least one PRB per state");
  }
};

// Per-state parameters, shared across time steps.
template <typename T>
struct RecurrentState {
  Conv2d<T> rlfe1;
  Conv2d<T> rlfe2;
  Conv2d<T> clm;  // 1x1, 3C -> C
  MemoryInit<T> memory_init;
  std::vector<Prb<T>> blocks;

  static RecurrentState create(ParamBag<T>& bag, const std::string& name, const PrrnnConfig& cfg, Rng& rng) {
    const auto& w = cfg.widths;
    RecurrentState s;
    s.rlfe1 = make_conv(bag, name + ".rlfe1", 1, w.features, 3, rng);
    s.rlfe2 = make_conv(bag, name + ".rlfe2", w.features, w.features, 3, rng);
    s.clm = make_conv(bag, name + ".clm", kStates * w.features, w.features, 1, rng);
    s.memory_init = MemoryInit<T>::create(bag, name + ".m0", w, rng);
    for (std::size_t b = 1; b <= cfg.blocks_per_state; ++b) {
      s.blocks.push_back(Prb<T>::create(bag, name + ".prb" + std::to_string(b), w, rng));
    }
    return s;
  }
};

// One collaborative update: every state warps the other two onto itself,
// concatenates [C-part, N-part, Q-part] in state order with its own feature
// in its own slot, compresses with a 1x1 conv and refines with its PRBs.
template <typename T>
std::array<Tensor<T>, kStates> clm_step(Graph<T>& g, const std::array<Tensor<T>, kStates>& features,
                                        const StateFlows<T>& flows,
                                        const std::array<RecurrentState<T>, kStates>& states) {
  for (const auto& f : features) {
    if (f.shape() != features[0].shape()) throw DimensionError("CLM: state features differ in shape");
  }
  std::array<Tensor<T>, kStates> out;
  for (std::size_t j = 0; j < kStates; ++j) {
    std::vector<Tensor<T>> parts;
    for (std::size_t i = 0; i < kStates; ++i) {
      parts.push_back(i == j ? features[j] : bilinear_warp(g, features[i], flows.flow[i][j]));
    }
    const auto& s = states[j];
    const Tensor<T> c = s.clm(g, concat_channels(g, parts));
    out[j] = run_prbs(g, s.blocks, c, s.memory_init(g, c)).feature;
  }
  return out;
}

template <typename T>
class Prrnn {
 public:
  explicit Prrnn(const PrrnnConfig& cfg, std::uint64_t seed = 1) : cfg_(cfg) {
    cfg.validate();
    Rng rng(seed);
    for (std::size_t s = 0; s < kStates; ++s) {
      states_[s] = RecurrentState<T>::create(bag_, std::string("prrnn.") + kStateNames[s], cfg, rng);
    }
    const auto& w = cfg.widths;
    compress_ = make_conv(bag_, "prrnn.compress", (cfg.unfold + 1) * w.features, w.features, 1, rng);
    rec_ = make_conv(bag_, "prrnn.rec", w.features, 1, 3, rng);
    // With the input skip the network starts as the identity and learns a
    // correction.
    if (cfg.input_skip) std::fill(rec_.weight.data().begin(), rec_.weight.data().end(), T(0));
  }

  const PrrnnConfig& config() const { return cfg_; }
  ParamBag<T>& params() { return bag_; }
  const ParamBag<T>& params() const { return bag_; }

  // frames = {x_C, x_N, x_Q}, each [N,1,H,W] in [0,1].
  Tensor<T> forward(Graph<T>& g, const std::array<Tensor<T>, kStates>& frames) const {
    check_frames(frames);
    return forward_with_flows(g, frames, estimate_state_flows(frames, cfg_.flow));
  }

  Tensor<T> forward_with_flows(Graph<T>& g, const std::array<Tensor<T>, kStates>& frames,
                               const StateFlows<T>& flows) const {
    const auto [cat, fg] = temporal_features(g, frames, flows);
    Tensor<T> out = rec_(g, add(g, compress_(g, cat), fg));
    if (cfg_.input_skip) out = add(g, out, frames[kStateC]);
    return out;
  }

  // [F_C^0, ..., F_C^T] before compression, and the global-residual feature
  // F_G taken from state C's first RLFE conv.
  std::pair<Tensor<T>, Tensor<T>> temporal_features(Graph<T>& g, const std::array<Tensor<T>, kStates>& frames,
                                                    const StateFlows<T>& flows) const {
    check_frames(frames);
    std::array<Tensor<T>, kStates> feat;
    Tensor<T> fg;
    for (std::size_t s = 0; s < kStates; ++s) {
      const Tensor<T> first = states_[s].rlfe1(g, frames[s]);
      if (s == kStateC) fg = first;
      feat[s] = states_[s].rlfe2(g, first);
    }
    std::vector<Tensor<T>> history{feat[kStateC]};
    for (std::size_t t = 0; t < cfg_.unfold; ++t) {
      feat = clm_step(g, feat, flows, states_);
      history.push_back(feat[kStateC]);
    }
    return {concat_channels(g, history), fg};
  }

  const std::array<RecurrentState<T>, kStates>& states() const { return states_; }

  static std::size_t parameter_count(const PrrnnConfig& c) {
    const auto& w = c.widths;
    const std::size_t per_state = (9 * w.features + w.features) + (9 * w.features * w.features + w.features) +
                                  (kStates * w.features * w.features + w.features) +
                                  MemoryInit<T>::parameter_count(w) +
                                  c.blocks_per_state * Prb<T>::parameter_count(w);
    return kStates * per_state + ((c.unfold + 1) * w.features * w.features + w.features) + (9 * w.features + 1);
  }

  NamedArray meta() const {
    NamedArray a{"meta.prrnn", {10}, {}};
    const auto& w = cfg_.widths;
    for (std::size_t v : {w.features, w.memory, w.growth, w.layers, cfg_.blocks_per_state, cfg_.unfold}) {
      a.values.push_back(static_cast<float>(v));
    }
    a.values.push_back(cfg_.input_skip ? 1.0f : 0.0f);
    for (int v : {cfg_.flow.levels, cfg_.flow.block, cfg_.flow.radius}) a.values.push_back(static_cast<float>(v));
    return a;
  }

  static PrrnnConfig config_from_meta(const NamedArray& a) {
    if (a.name != "meta.prrnn" || a.values.size() != 10) throw IoError("checkpoint has no PR-RNN metadata");
    auto u = [&](std::size_t i) { return static_cast<std::size_t>(a.values[i]); };
    PrrnnConfig c;
    c.widths = PrbWidths{u(0), u(1), u(2), u(3)};
    c.blocks_per_state = u(4);
    c.unfold = u(5);
    c.input_skip = a.values[6] != 0.0f;
    c.flow = FlowParams{static_cast<int>(a.values[7]), static_cast<int>(a.values[8]), static_cast<int>(a.values[9])};
    return c;
  }

  static Prrnn from_arrays(const std::vector<NamedArray>& arrays) {
    const NamedArray* meta = find_array(arrays, "meta.prrnn");
    if (!meta) throw IoError("checkpoint has no PR-RNN metadata");
    Prrnn model(config_from_meta(*meta));
    model.bag_.load(arrays);
    return model;
  }

 private:
  void check_frames(const std::array<Tensor<T>, kStates>& frames) const {
    for (const auto& f : frames) {
      if (f.shape() != frames[0].shape() || f.shape().c != 1) {
        throw DimensionError("PR-RNN expects three single-channel frames of equal size");
      }
    }
  }

  PrrnnConfig cfg_;
  ParamBag<T> bag_;
  std::array<RecurrentState<T>, kStates> states_;
  Conv2d<T> compress_;
  Conv2d<T> rec_;
};

}  // namespace prn
