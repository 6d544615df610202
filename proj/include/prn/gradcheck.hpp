#pragma once

// Finite-difference verification of analytic gradients in 64-bit mode.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "prn/errors.hpp"
#include "prn/nn/prcnn.hpp"
#include "prn/nn/prrnn.hpp"
#include "prn/rng.hpp"
#include "prn/tensor.hpp"

namespace prn {

using GradFn = std::function<Tensor<double>(Graph<double>&)>;

struct GradCase {
  GradFn fn;
  std::vector<Tensor<double>> leaves;
  // Composite networks contain many relu kinks; a smaller step keeps the
  // central difference from straddling one.
  double step = 1e-3;
  std::shared_ptr<void> keep_alive;  // owns any model the closure refers to
};

struct GradCheckReport {
  std::string op;
  double max_rel_error = 0;
  std::size_t checked = 0;
  bool pass = false;
};

struct GradCheckOptions {
  double step = 0;  // 0 = use the case's own step
  std::size_t max_entries_per_leaf = 48;
  // Multiplies the analytic gradient before comparison; != 1 gives a
  // negative control.
  double corrupt_scale = 1.0;
  std::uint64_t seed = 7;
};

inline Tensor<double> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(s);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Random values bounded away from zero, so relu has no kink within the
// finite-difference step.
inline Tensor<double> kink_free_tensor(Shape s, Rng& rng) {
  Tensor<double> t(s);
  for (auto& v : t.data()) {
    const double m = rng.uniform(0.05, 1.0);
    v = rng.coin() ? m : -m;
  }
  return t;
}

// Compares dL/dleaf for L = <fn(), R> (R a fixed random projection) against
// central differences. Relative error per entry is |a - n| / max(|a|, |n|, s)
// with s = 1e-3 * max |n| over the checked entries.
inline GradCheckReport check_gradients(const std::string& name, GradCase c, const GradCheckOptions& opt = {}) {
  Rng rng(opt.seed);
  const double h = opt.step > 0 ? opt.step : c.step;
  for (auto& leaf : c.leaves) {
    leaf.set_requires_grad(true);
    leaf.clear_grad();
  }
  Tensor<double> projection;
  auto loss_value = [&](Graph<double>& g) {
    Tensor<double> out = c.fn(g);
    if (!projection.defined()) projection = random_tensor(out.shape(), rng);
    return inner(g, out, projection);
  };

  Graph<double> g;
  const Tensor<double> loss = loss_value(g);
  g.backward(loss);

  struct Sample {
    double analytic, numeric;
  };
  std::vector<Sample> samples;
  for (auto& leaf : c.leaves) {
    std::vector<std::size_t> idx(leaf.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (idx.size() > opt.max_entries_per_leaf) {
      for (std::size_t i = 0; i < opt.max_entries_per_leaf; ++i) {
        std::swap(idx[i], idx[i + rng.below(idx.size() - i)]);
      }
      idx.resize(opt.max_entries_per_leaf);
    }
    for (std::size_t i : idx) {
      const double analytic = (leaf.has_grad() ? leaf.grad()[i] : 0.0) * opt.corrupt_scale;
      const double orig = leaf.data()[i];
      leaf.data()[i] = orig + h;
      Graph<double> gp = Graph<double>::inference();
      const double up = loss_value(gp).item();
      leaf.data()[i] = orig - h;
      Graph<double> gm = Graph<double>::inference();
      const double down = loss_value(gm).item();
      leaf.data()[i] = orig;
      samples.push_back({analytic, (up - down) / (2.0 * h)});
    }
  }

  double scale = 0.0;
  for (const auto& s : samples) scale = std::max(scale, std::fabs(s.numeric));
  const double floor = std::max(1e-3 * scale, 1e-12);
  GradCheckReport rep;
  rep.op = name;
  rep.checked = samples.size();
  for (const auto& s : samples) {
    const double denom = std::max({std::fabs(s.analytic), std::fabs(s.numeric), floor});
    rep.max_rel_error = std::max(rep.max_rel_error, std::fabs(s.analytic - s.numeric) / denom);
  }
  for (auto& leaf : c.leaves) leaf.clear_grad();
  return rep;
}

inline const std::vector<std::string>& grad_check_ops() {
  static const std::vector<std::string> ops{"conv2d", "conv2d_1x1", "relu", "concat_channels", "add",
                                            "bilinear_warp", "mse", "prb", "sife", "prcnn", "clm", "prrnn"};
  return ops;
}

inline constexpr PrbWidths kGradCheckWidths{4, 8, 4, 2};

// Builds the default randomized case for an operator. When `inputs` is
// non-empty it replaces the operator's data inputs (parameters of composite
// networks are always freshly initialised).
inline GradCase make_grad_case(const std::string& op, std::vector<Tensor<double>> inputs, std::uint64_t seed) {
  Rng rng(seed);
  auto in = [&](std::size_t i, Shape s, bool kink_free = false) {
    if (i < inputs.size()) return inputs[i];
    return kink_free ? kink_free_tensor(s, rng) : random_tensor(s, rng);
  };
  GradCase c;
  if (op == "conv2d" || op == "conv2d_1x1") {
    const int k = op == "conv2d" ? 3 : 1;
    const auto ku = static_cast<std::size_t>(k);
    auto x = in(0, Shape{1, 2, 5, 5});
    auto w = in(1, Shape{4, x.shape().c, ku, ku});
    auto b = in(2, Shape{w.shape().n, 1, 1, 1});
    c.leaves = {x, w, b};
    c.fn = [x, w, b, k](Graph<double>& g) { return conv2d(g, x, w, b, k); };
  } else if (op == "relu") {
    auto x = in(0, Shape{2, 3, 4, 4}, true);
    c.leaves = {x};
    c.fn = [x](Graph<double>& g) { return relu(g, x); };
  } else if (op == "concat_channels") {
    auto a = in(0, Shape{2, 3, 4, 5});
    auto b = in(1, Shape{a.shape().n, 2, a.shape().h, a.shape().w});
    c.leaves = {a, b};
    c.fn = [a, b](Graph<double>& g) { return concat_channels(g, {a, b}); };
  } else if (op == "add") {
    auto a = in(0, Shape{2, 3, 4, 4});
    auto b = in(1, a.shape());
    c.leaves = {a, b};
    c.fn = [a, b](Graph<double>& g) { return add(g, a, b); };
  } else if (op == "bilinear_warp") {
    auto f = in(0, Shape{1, 3, 6, 7});
    auto flow = inputs.size() > 1 ? inputs[1] : random_tensor(Shape{f.shape().n, 2, f.shape().h, f.shape().w}, rng, -1.7, 1.7);
    c.leaves = {f};
    c.fn = [f, flow](Graph<double>& g) { return bilinear_warp(g, f, flow); };
  } else if (op == "mse") {
    auto a = in(0, Shape{2, 1, 4, 4});
    auto b = in(1, a.shape());
    c.leaves = {a, b};
    c.fn = [a, b](Graph<double>& g) { return mse(g, a, b); };
  } else if (op == "prb") {
    const auto w = kGradCheckWidths;
    auto bag = std::make_shared<ParamBag<double>>();
    auto prb = std::make_shared<Prb<double>>(Prb<double>::create(*bag, "prb", w, rng));
    auto f = in(0, Shape{1, w.features, 6, 6});
    auto m = in(1, Shape{1, w.memory, 6, 6});
    c.leaves = {f, m};
    for (auto& t : bag->tensors()) c.leaves.push_back(t);
    c.fn = [prb, f, m](Graph<double>& g) {
      auto o = prb->forward(g, f, m);
      return concat_channels(g, {o.feature, o.memory});
    };
    c.keep_alive = bag;
  } else if (op == "sife") {
    const auto w = kGradCheckWidths;
    auto bag = std::make_shared<ParamBag<double>>();
    auto sife = std::make_shared<Sife<double>>(Sife<double>::create(*bag, "sife", w, rng));
    auto map = in(0, Shape{1, 1, 6, 6}, false);
    c.leaves = {map};
    for (auto& t : bag->tensors()) c.leaves.push_back(t);
    c.fn = [sife, map](Graph<double>& g) { return sife->forward(g, map); };
    c.keep_alive = bag;
  } else if (op == "prcnn") {
    PrcnnConfig cfg;
    cfg.widths = kGradCheckWidths;
    cfg.blocks = 2;
    cfg.fusion_after = {1, 1, 2, 2};
    auto model = std::make_shared<Prcnn<double>>(cfg, seed);
    auto x = in(0, Shape{1, 1, 6, 6});
    std::array<Tensor<double>, kMmcuLevels> maps;
    for (std::size_t l = 0; l < maps.size(); ++l) maps[l] = in(1 + l, x.shape());
    c.leaves = {x, maps[0], maps[1], maps[2], maps[3]};
    for (auto& t : model->params().tensors()) c.leaves.push_back(t);
    c.fn = [model, x, maps](Graph<double>& g) { return model->forward(g, x, maps); };
    c.keep_alive = model;
  } else if (op == "clm" || op == "prrnn") {
    PrrnnConfig cfg;
    cfg.widths = kGradCheckWidths;
    cfg.blocks_per_state = 1;
    cfg.unfold = 2;
    auto model = std::make_shared<Prrnn<double>>(cfg, seed);
    const std::size_t ch = op == "clm" ? cfg.widths.features : 1;
    std::array<Tensor<double>, kStates> x;
    for (std::size_t s = 0; s < kStates; ++s) x[s] = in(s, Shape{1, ch, 6, 6});
    StateFlows<double> flows;
    for (std::size_t i = 0; i < kStates; ++i)
      for (std::size_t j = 0; j < kStates; ++j)
        if (i != j) flows.flow[i][j] = random_tensor(Shape{1, 2, 6, 6}, rng, -1.5, 1.5);
    c.leaves = {x[0], x[1], x[2]};
    for (auto& t : model->params().tensors()) c.leaves.push_back(t);
    if (op == "clm") {
      c.fn = [model, x, flows](Graph<double>& g) {
        auto o = clm_step(g, x, flows, model->states());
        return concat_channels(g, {o[0], o[1], o[2]});
      };
    } else {
      c.fn = [model, x, flows](Graph<double>& g) { return model->forward_with_flows(g, x, flows); };
    }
    c.keep_alive = model;
  } else {
    throw ArgumentError("grad_check: unknown operator '" + op + "'");
  }
  if (c.keep_alive) c.step = 1e-5;
  return c;
}

inline GradCheckReport grad_check(const std::string& op, const std::vector<Tensor<double>>& inputs,
                                  double tolerance, const GradCheckOptions& opt = {}) {
  GradCheckReport rep = check_gradients(op, make_grad_case(op, inputs, opt.seed), opt);
  rep.pass = rep.max_rel_error < tolerance;
  return rep;
}

}  // namespace prn
