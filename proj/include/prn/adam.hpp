#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "prn/errors.hpp"
#include "prn/tensor.hpp"

namespace prn {

struct AdamHyper {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment buffers are allocated lazily on the first step and kept in the
// order of the parameter list passed to adam_step.
template <typename T>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t t = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
};

// One bias-corrected Adam update; gradients are cleared afterwards.
template <typename T>
void adam_step(std::vector<Tensor<T>>& params, AdamState<T>& state) {
  for (const auto& p : params) {
    if (!p.has_grad()) throw StateError("adam_step: parameter without gradient");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.size(), T(0));
      state.v.emplace_back(p.size(), T(0));
    }
  }
  if (state.m.size() != params.size()) throw StateError("adam_step: parameter list changed size");
  state.t += 1;
  const auto& h = state.hyper;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  const T b1 = static_cast<T>(h.beta1);
  const T b2 = static_cast<T>(h.beta2);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != p.size()) throw StateError("adam_step: moment shape mismatch");
    auto w = p.data();
    auto g = p.grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (T(1) - b1) * g[i];
      v[i] = b2 * v[i] + (T(1) - b2) * g[i] * g[i];
      const double mhat = static_cast<double>(m[i]) / bc1;
      const double vhat = static_cast<double>(v[i]) / bc2;
      w[i] = static_cast<T>(static_cast<double>(w[i]) - h.lr * mhat / (std::sqrt(vhat) + h.epsilon));
    }
    p.clear_grad();
  }
}

}  // namespace prn
