#pragma once

// Dense NCHW tensors and a tape-based reverse-mode autodiff graph.
//
// A Tensor is a shared handle: copies alias the same storage. Operators take
// the Graph as their first argument and record themselves when the graph is
// enabled and at least one input requires a gradient.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "prn/errors.hpp"

namespace prn {

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t size() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
  }
};

// Buffers start on an Eigen-aligned boundary. Eigen peels unaligned heads
// off vectorised reductions, so the rounding of a result would otherwise
// depend on where malloc happened to place the buffer.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct TensorStorage {
  Shape shape;
  AlignedVector<T> data;
  AlignedVector<T> grad;  // empty until a gradient has been accumulated
  bool requires_grad = false;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : s_(std::make_shared<TensorStorage<T>>()) {
    s_->shape = shape;
    s_->data.assign(shape.size(), fill);
  }
  Tensor(Shape shape, std::vector<T> values) : s_(std::make_shared<TensorStorage<T>>()) {
    if (values.size() != shape.size()) {
      throw DimensionError("tensor data length " + std::to_string(values.size()) +
                           " does not match shape " + shape.str());
    }
    s_->shape = shape;
    s_->data.assign(values.begin(), values.end());
  }

  static Tensor scalar(T v) { return Tensor(Shape{1, 1, 1, 1}, v); }

  bool defined() const { return static_cast<bool>(s_); }
  const void* id() const { return s_.get(); }

  const Shape& shape() const { return s_->shape; }
  std::size_t size() const { return s_->data.size(); }

  std::span<T> data() { return s_->data; }
  std::span<const T> data() const { return s_->data; }
  T* ptr() { return s_->data.data(); }
  const T* ptr() const { return s_->data.data(); }

  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    const Shape& s = s_->shape;
    return s_->data[((n * s.c + c) * s.h + y) * s.w + x];
  }
  T at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    const Shape& s = s_->shape;
    return s_->data[((n * s.c + c) * s.h + y) * s.w + x];
  }
  T item() const {
    if (size() != 1) throw DimensionError("item() on non-scalar tensor " + shape().str());
    return s_->data[0];
  }

  bool requires_grad() const { return s_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    s_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !s_->grad.empty(); }
  std::span<T> grad() { return s_->grad; }
  std::span<const T> grad() const { return s_->grad; }
  // Allocates a zero gradient buffer if none exists. Gradient accumulation
  // goes through const handles too: the handle, not the storage, is const.
  std::span<T> ensure_grad() const {
    if (s_->grad.empty()) s_->grad.assign(s_->data.size(), T(0));
    return s_->grad;
  }
  void clear_grad() { AlignedVector<T>().swap(s_->grad); }

  Tensor clone() const {
    Tensor out(shape());
    std::copy(s_->data.begin(), s_->data.end(), out.s_->data.begin());
    return out;
  }

 private:
  std::shared_ptr<TensorStorage<T>> s_;
};

enum class OpKind { Conv2d, Relu, Concat, Add, Warp, Mse, Sum, Inner };

inline const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::Conv2d: return "conv2d";
    case OpKind::Relu: return "relu";
    case OpKind::Concat: return "concat_channels";
    case OpKind::Add: return "add";
    case OpKind::Warp: return "bilinear_warp";
    case OpKind::Mse: return "mse";
    case OpKind::Sum: return "sum";
    case OpKind::Inner: return "inner";
  }
  return "?";
}

template <typename T>
class Graph {
 public:
  struct Record {
    OpKind kind;
    std::vector<Tensor<T>> inputs;
    Tensor<T> output;
    std::function<void()> backward;
  };

  Graph() = default;
  // A disabled graph never records anything (inference mode).
  static Graph inference() {
    Graph g;
    g.enabled_ = false;
    return g;
  }

  bool enabled() const { return enabled_; }

  bool wants(std::initializer_list<const Tensor<T>*> inputs) const {
    if (!enabled_) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor<T>* t) { return t->requires_grad(); });
  }
  bool wants(std::span<const Tensor<T>> inputs) const {
    if (!enabled_) return false;
    return std::any_of(inputs.begin(), inputs.end(),
                       [](const Tensor<T>& t) { return t.requires_grad(); });
  }

  void record(OpKind kind, std::vector<Tensor<T>> inputs, Tensor<T> output,
              std::function<void()> backward) {
    output.set_requires_grad(true);
    records_.push_back(Record{kind, std::move(inputs), std::move(output), std::move(backward)});
  }

  const std::vector<Record>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  void clear() { records_.clear(); }

  // Populates dLoss/dLeaf on every leaf reachable from loss. Records are
  // replayed in reverse insertion order, which is a valid reverse topological
  // order since an operator can only consume tensors that already exist.
  void backward(Tensor<T> loss) {
    if (!loss.defined() || loss.shape() != Shape{1, 1, 1, 1}) {
      throw DimensionError("backward: loss must have shape (1,1,1,1)");
    }
    std::ptrdiff_t last = -1;
    for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(records_.size()) - 1; i >= 0; --i) {
      if (records_[static_cast<std::size_t>(i)].output.id() == loss.id()) {
        last = i;
        break;
      }
    }
    if (last < 0) throw StateError("backward: loss was not produced by this graph");
    loss.ensure_grad()[0] += T(1);
    for (std::ptrdiff_t i = last; i >= 0; --i) {
      Record& r = records_[static_cast<std::size_t>(i)];
      if (r.output.has_grad()) r.backward();
    }
  }

 private:
  bool enabled_ = true;
  std::vector<Record> records_;
};

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

inline void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw DimensionError(std::string(op) + ": shape mismatch " + a.str() + " vs " + b.str());
}

// col[(ci*k*k + ky*k + kx), y*W + x] = in[ci, y+ky-p, x+kx-p] (zero outside).
template <typename T>
void im2col(const T* in, std::size_t channels, std::size_t h, std::size_t w, int k, T* col) {
  const int pad = (k - 1) / 2;
  const std::size_t hw = h * w;
  for (std::size_t ci = 0; ci < channels; ++ci) {
    const T* src = in + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + ((ci * k + ky) * k + kx) * hw;
        const int dy = ky - pad;
        const int dx = kx - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          T* row = dst + y * w;
          if (sy < 0 || sy >= static_cast<long>(h)) {
            std::fill(row, row + w, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(sy) * w;
          const long x0 = std::max<long>(0, -dx);
          const long x1 = std::min<long>(static_cast<long>(w), static_cast<long>(w) - dx);
          for (long x = 0; x < x0; ++x) row[x] = T(0);
          for (long x = x0; x < x1; ++x) row[x] = srow[x + dx];
          for (long x = std::max(x1, x0); x < static_cast<long>(w); ++x) row[x] = T(0);
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, std::size_t channels, std::size_t h, std::size_t w, int k, T* out) {
  const int pad = (k - 1) / 2;
  const std::size_t hw = h * w;
  for (std::size_t ci = 0; ci < channels; ++ci) {
    T* dst = out + ci * hw;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + ((ci * k + ky) * k + kx) * hw;
        const int dy = ky - pad;
        const int dx = kx - pad;
        for (std::size_t y = 0; y < h; ++y) {
          const long sy = static_cast<long>(y) + dy;
          if (sy < 0 || sy >= static_cast<long>(h)) continue;
          const T* row = src + y * w;
          T* drow = dst + static_cast<std::size_t>(sy) * w;
          const long x0 = std::max<long>(0, -dx);
          const long x1 = std::min<long>(static_cast<long>(w), static_cast<long>(w) - dx);
          for (long x = x0; x < x1; ++x) drow[x + dx] += row[x];
        }
      }
    }
  }
}

}  // namespace detail

// Same-padded, stride-1 convolution. weight is [outC, inC, k, k] stored as a
// Shape{outC, inC, k, k}; bias is [outC] stored as Shape{outC, 1, 1, 1}.
template <typename T>
Tensor<T> conv2d(Graph<T>& g, const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias,
                 int kernel) {
  if (kernel != 1 && kernel != 3) {
    throw UnsupportedKernelError("conv2d: kernel " + std::to_string(kernel) + " not in {1,3}");
  }
  const Shape& is = input.shape();
  const Shape& ws = weight.shape();
  if (ws.h != static_cast<std::size_t>(kernel) || ws.w != static_cast<std::size_t>(kernel)) {
    throw DimensionError("conv2d: weight " + ws.str() + " does not match kernel " + std::to_string(kernel));
  }
  if (ws.c != is.c) {
    throw DimensionError("conv2d: input channels " + std::to_string(is.c) + " != weight inC " +
                         std::to_string(ws.c));
  }
  if (bias.size() != ws.n) throw DimensionError("conv2d: bias length does not match outC");

  const std::size_t out_c = ws.n;
  const std::size_t in_c = is.c;
  const std::size_t hw = is.plane();
  const std::size_t kk = static_cast<std::size_t>(kernel * kernel);
  Tensor<T> out(Shape{is.n, out_c, is.h, is.w});

  detail::CMapMat<T> wm(weight.ptr(), static_cast<Eigen::Index>(out_c), static_cast<Eigen::Index>(in_c * kk));
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bv(bias.ptr(), static_cast<Eigen::Index>(out_c));
  AlignedVector<T> col(kernel == 1 ? 0 : in_c * kk * hw);
  for (std::size_t n = 0; n < is.n; ++n) {
    const T* src = input.ptr() + n * in_c * hw;
    const T* colp = src;
    if (kernel != 1) {
      detail::im2col(src, in_c, is.h, is.w, kernel, col.data());
      colp = col.data();
    }
    detail::CMapMat<T> cm(colp, static_cast<Eigen::Index>(in_c * kk), static_cast<Eigen::Index>(hw));
    detail::MapMat<T> om(out.ptr() + n * out_c * hw, static_cast<Eigen::Index>(out_c),
                         static_cast<Eigen::Index>(hw));
    om.noalias() = wm * cm;
    om.colwise() += bv;
  }

  if (g.wants({&input, &weight, &bias})) {
    g.record(OpKind::Conv2d, {input, weight, bias}, out, [input, weight, bias, out, kernel]() mutable {
      const Shape& is = input.shape();
      const std::size_t out_c = weight.shape().n;
      const std::size_t in_c = is.c;
      const std::size_t hw = is.plane();
      const std::size_t kk = static_cast<std::size_t>(kernel * kernel);
      const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };
      auto gout = out.grad();
      detail::CMapMat<T> wm(weight.ptr(), ei(out_c), ei(in_c * kk));
      AlignedVector<T> col(kernel == 1 ? 0 : in_c * kk * hw);
      AlignedVector<T> dcol(kernel == 1 ? 0 : in_c * kk * hw);
      for (std::size_t n = 0; n < is.n; ++n) {
        const T* src = input.ptr() + n * in_c * hw;
        detail::CMapMat<T> go(gout.data() + n * out_c * hw, ei(out_c), ei(hw));
        if (bias.requires_grad()) {
          auto gb = bias.ensure_grad();
          Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> gbv(gb.data(), ei(out_c));
          gbv += go.rowwise().sum();
        }
        if (weight.requires_grad()) {
          const T* colp = src;
          if (kernel != 1) {
            detail::im2col(src, in_c, is.h, is.w, kernel, col.data());
            colp = col.data();
          }
          detail::CMapMat<T> cm(colp, ei(in_c * kk), ei(hw));
          detail::MapMat<T> gw(weight.ensure_grad().data(), ei(out_c), ei(in_c * kk));
          gw.noalias() += go * cm.transpose();
        }
        if (input.requires_grad()) {
          T* gin = input.ensure_grad().data() + n * in_c * hw;
          if (kernel == 1) {
            detail::MapMat<T> gi(gin, ei(in_c), ei(hw));
            gi.noalias() += wm.transpose() * go;
          } else {
            detail::MapMat<T> dc(dcol.data(), ei(in_c * kk), ei(hw));
            dc.noalias() = wm.transpose() * go;
            detail::col2im_add(dcol.data(), in_c, is.h, is.w, kernel, gin);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Graph<T>& g, const Tensor<T>& input) {
  Tensor<T> out(input.shape());
  auto src = input.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
  if (g.wants({&input})) {
    g.record(OpKind::Relu, {input}, out, [input, out]() mutable {
      auto gi = input.ensure_grad();
      auto go = out.grad();
      auto x = input.data();
      for (std::size_t i = 0; i < gi.size(); ++i) {
        if (x[i] > T(0)) gi[i] += go[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> concat_channels(Graph<T>& g, const std::vector<Tensor<T>>& inputs) {
  if (inputs.empty()) throw ArgumentError("concat_channels: empty input list");
  const Shape& first = inputs.front().shape();
  std::size_t channels = 0;
  for (const auto& t : inputs) {
    const Shape& s = t.shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw DimensionError("concat_channels: spatial mismatch " + first.str() + " vs " + s.str());
    }
    channels += s.c;
  }
  const std::size_t hw = first.plane();
  Tensor<T> out(Shape{first.n, channels, first.h, first.w});
  for (std::size_t n = 0; n < first.n; ++n) {
    T* dst = out.ptr() + n * channels * hw;
    for (const auto& t : inputs) {
      const std::size_t block = t.shape().c * hw;
      std::copy_n(t.ptr() + n * block, block, dst);
      dst += block;
    }
  }
  if (g.wants(std::span<const Tensor<T>>(inputs))) {
    g.record(OpKind::Concat, inputs, out, [inputs, out, channels, hw]() mutable {
      auto go = out.grad();
      const std::size_t batch = out.shape().n;
      std::size_t offset = 0;
      for (auto t : inputs) {
        const std::size_t block = t.shape().c * hw;
        if (t.requires_grad()) {
          auto gi = t.ensure_grad();
          for (std::size_t n = 0; n < batch; ++n) {
            const T* src = go.data() + n * channels * hw + offset;
            T* dst = gi.data() + n * block;
            for (std::size_t i = 0; i < block; ++i) dst[i] += src[i];
          }
        }
        offset += block;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  auto pa = a.data();
  auto pb = b.data();
  auto po = out.data();
  for (std::size_t i = 0; i < po.size(); ++i) po[i] = pa[i] + pb[i];
  if (g.wants({&a, &b})) {
    g.record(OpKind::Add, {a, b}, out, [a, b, out]() mutable {
      auto go = out.grad();
      for (const Tensor<T>* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto gi = t->ensure_grad();
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go[i];
      }
    });
  }
  return out;
}

namespace detail {

struct BilinearTap {
  std::size_t x0, x1, y0, y1;
  double wx, wy;
};

// Clamps the sample point to the image rectangle, then splits it into the
// four neighbouring taps.
inline BilinearTap bilinear_tap(double sx, double sy, std::size_t w, std::size_t h) {
  sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
  BilinearTap t{};
  t.x0 = static_cast<std::size_t>(std::floor(sx));
  t.y0 = static_cast<std::size_t>(std::floor(sy));
  t.x1 = std::min(t.x0 + 1, w - 1);
  t.y1 = std::min(t.y0 + 1, h - 1);
  t.wx = sx - static_cast<double>(t.x0);
  t.wy = sy - static_cast<double>(t.y0);
  return t;
}

}  // namespace detail

// output(y, x) = feature sampled at (x + flow[0](y,x), y + flow[1](y,x)).
// The flow is a constant for differentiation.
template <typename T>
Tensor<T> bilinear_warp(Graph<T>& g, const Tensor<T>& feature, const Tensor<T>& flow) {
  const Shape& fs = feature.shape();
  const Shape& ls = flow.shape();
  if (ls.c != 2) throw DimensionError("bilinear_warp: flow must have 2 channels, got " + std::to_string(ls.c));
  if (ls.n != fs.n || ls.h != fs.h || ls.w != fs.w) {
    throw DimensionError("bilinear_warp: flow " + ls.str() + " does not match feature " + fs.str());
  }
  const std::size_t hw = fs.plane();
  std::vector<detail::BilinearTap> taps(fs.n * hw);
  for (std::size_t n = 0; n < fs.n; ++n) {
    const T* u = flow.ptr() + n * 2 * hw;
    const T* v = u + hw;
    for (std::size_t y = 0; y < fs.h; ++y) {
      for (std::size_t x = 0; x < fs.w; ++x) {
        const std::size_t p = y * fs.w + x;
        taps[n * hw + p] = detail::bilinear_tap(static_cast<double>(x) + static_cast<double>(u[p]),
                                                static_cast<double>(y) + static_cast<double>(v[p]), fs.w,
                                                fs.h);
      }
    }
  }
  Tensor<T> out(fs);
  for (std::size_t n = 0; n < fs.n; ++n) {
    for (std::size_t c = 0; c < fs.c; ++c) {
      const T* src = feature.ptr() + (n * fs.c + c) * hw;
      T* dst = out.ptr() + (n * fs.c + c) * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        const auto& t = taps[n * hw + p];
        const T wx = static_cast<T>(t.wx);
        const T wy = static_cast<T>(t.wy);
        const T top = src[t.y0 * fs.w + t.x0] * (T(1) - wx) + src[t.y0 * fs.w + t.x1] * wx;
        const T bot = src[t.y1 * fs.w + t.x0] * (T(1) - wx) + src[t.y1 * fs.w + t.x1] * wx;
        dst[p] = top * (T(1) - wy) + bot * wy;
      }
    }
  }
  if (g.wants({&feature})) {
    g.record(OpKind::Warp, {feature}, out, [feature, out, taps = std::move(taps)]() mutable {
      const Shape& fs = feature.shape();
      const std::size_t hw = fs.plane();
      auto gi = feature.ensure_grad();
      auto go = out.grad();
      for (std::size_t n = 0; n < fs.n; ++n) {
        for (std::size_t c = 0; c < fs.c; ++c) {
          T* dst = gi.data() + (n * fs.c + c) * hw;
          const T* src = go.data() + (n * fs.c + c) * hw;
          for (std::size_t p = 0; p < hw; ++p) {
            const auto& t = taps[n * hw + p];
            const T wx = static_cast<T>(t.wx);
            const T wy = static_cast<T>(t.wy);
            const T gv = src[p];
            dst[t.y0 * fs.w + t.x0] += gv * (T(1) - wx) * (T(1) - wy);
            dst[t.y0 * fs.w + t.x1] += gv * wx * (T(1) - wy);
            dst[t.y1 * fs.w + t.x0] += gv * (T(1) - wx) * wy;
            dst[t.y1 * fs.w + t.x1] += gv * wx * wy;
          }
        }
      }
    });
  }
  return out;
}

// Mean squared error, accumulated in double.
template <typename T>
Tensor<T> mse(Graph<T>& g, const Tensor<T>& pred, const Tensor<T>& target) {
  detail::require_same(pred.shape(), target.shape(), "mse");
  auto a = pred.data();
  auto b = target.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc / static_cast<double>(a.size())));
  if (g.wants({&pred, &target})) {
    g.record(OpKind::Mse, {pred, target}, out, [pred, target, out]() mutable {
      const T scale = T(2) * out.grad()[0] / static_cast<T>(pred.size());
      auto a = pred.data();
      auto b = target.data();
      if (pred.requires_grad()) {
        auto ga = pred.ensure_grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += scale * (a[i] - b[i]);
      }
      if (target.requires_grad()) {
        auto gb = target.ensure_grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= scale * (a[i] - b[i]);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& input) {
  double acc = 0.0;
  for (T v : input.data()) acc += static_cast<double>(v);
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
  if (g.wants({&input})) {
    g.record(OpKind::Sum, {input}, out, [input, out]() mutable {
      const T go = out.grad()[0];
      for (auto& v : input.ensure_grad()) v += go;
    });
  }
  return out;
}

// sum(input * weights) with weights treated as a constant; used to project a
// tensor output onto a random direction for gradient checks.
template <typename T>
Tensor<T> inner(Graph<T>& g, const Tensor<T>& input, const Tensor<T>& weights) {
  detail::require_same(input.shape(), weights.shape(), "inner");
  auto a = input.data();
  auto b = weights.data();
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  Tensor<T> out = Tensor<T>::scalar(static_cast<T>(acc));
  if (g.wants({&input})) {
    g.record(OpKind::Inner, {input}, out, [input, weights, out]() mutable {
      const T go = out.grad()[0];
      auto gi = input.ensure_grad();
      auto w = weights.data();
      for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += go * w[i];
    });
  }
  return out;
}

// Convenience: check that every stored value is finite.
template <typename T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

}  // namespace prn
