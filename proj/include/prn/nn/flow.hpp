#pragma once

// Coarse-to-fine block-matching flow estimator.
//
// estimate_flow(source, target) returns a per-pixel field (u, v) such that
// target(x, y) ~ source(x + u, y + v); bilinear_warp(source, flow) therefore
// aligns the source to the target.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <vector>

#include "prn/errors.hpp"
#include "prn/image.hpp"
#include "prn/tensor.hpp"

namespace prn {

struct FlowParams {
  int levels = 3;
  int block = 8;
  int radius = 4;

  // Largest displacement the estimator can produce along either axis.
  int max_displacement() const { return radius * ((1 << levels) - 1); }

  void validate() const {
    if (levels < 1 || block < 1 || radius < 0) throw ArgumentError("invalid flow estimator parameters");
  }
};

struct FlowImage {
  Image<float> u;
  Image<float> v;
};

namespace detail {

inline Image<float> downsample2(const Image<float>& src) {
  Image<float> out((src.width + 1) / 2, (src.height + 1) / 2);
  for (std::size_t y = 0; y < out.height; ++y) {
    for (std::size_t x = 0; x < out.width; ++x) {
      float s = 0;
      int n = 0;
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx) {
          const std::size_t sx = 2 * x + dx, sy = 2 * y + dy;
          if (sx < src.width && sy < src.height) {
            s += src(sx, sy);
            ++n;
          }
        }
      out(x, y) = s / static_cast<float>(n);
    }
  }
  return out;
}

struct BlockVec {
  int u = 0;
  int v = 0;
};

inline float sample_clamped(const Image<float>& img, long x, long y) {
  x = std::clamp<long>(x, 0, static_cast<long>(img.width) - 1);
  y = std::clamp<long>(y, 0, static_cast<long>(img.height) - 1);
  return img(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
}

inline std::vector<BlockVec> match_level(const Image<float>& src, const Image<float>& tgt, std::size_t bw,
                                         std::size_t bh, int block, int radius,
                                         const std::vector<BlockVec>& coarse, std::size_t cbw, std::size_t cbh) {
  std::vector<BlockVec> out(bw * bh);
  for (std::size_t by = 0; by < bh; ++by) {
    for (std::size_t bx = 0; bx < bw; ++bx) {
      const std::size_t x0 = bx * static_cast<std::size_t>(block);
      const std::size_t y0 = by * static_cast<std::size_t>(block);
      const std::size_t x1 = std::min(x0 + static_cast<std::size_t>(block), tgt.width);
      const std::size_t y1 = std::min(y0 + static_cast<std::size_t>(block), tgt.height);

      bool flat = true;
      const float ref = tgt(x0, y0);
      for (std::size_t y = y0; y < y1 && flat; ++y)
        for (std::size_t x = x0; x < x1; ++x)
          if (tgt(x, y) != ref) {
            flat = false;
            break;
          }
      if (flat) continue;  // zero vector

      BlockVec pred;
      if (!coarse.empty()) {
        const std::size_t cx = std::min(bx / 2, cbw - 1);
        const std::size_t cy = std::min(by / 2, cbh - 1);
        pred = BlockVec{2 * coarse[cy * cbw + cx].u, 2 * coarse[cy * cbw + cx].v};
      }
      float best = std::numeric_limits<float>::infinity();
      int best_norm = std::numeric_limits<int>::max();
      BlockVec best_vec = pred;
      for (int dv = -radius; dv <= radius; ++dv) {
        for (int du = -radius; du <= radius; ++du) {
          const int u = pred.u + du;
          const int v = pred.v + dv;
          float sad = 0;
          for (std::size_t y = y0; y < y1; ++y)
            for (std::size_t x = x0; x < x1; ++x)
              sad += std::fabs(tgt(x, y) - sample_clamped(src, static_cast<long>(x) + u, static_cast<long>(y) + v));
          const int norm = std::abs(u) + std::abs(v);
          if (sad < best || (sad == best && norm < best_norm)) {
            best = sad;
            best_norm = norm;
            best_vec = BlockVec{u, v};
          }
        }
      }
      out[by * bw + bx] = best_vec;
    }
  }
  return out;
}

}  // namespace detail

inline FlowImage estimate_flow(const Image<float>& source, const Image<float>& target,
                               const FlowParams& params = {}) {
  params.validate();
  if (!source.same_size(target)) throw DimensionError("estimate_flow: frame dimensions differ");
  if (source.empty()) throw ArgumentError("estimate_flow: empty frames");

  std::vector<Image<float>> src{source}, tgt{target};
  for (int l = 1; l < params.levels; ++l) {
    src.push_back(detail::downsample2(src.back()));
    tgt.push_back(detail::downsample2(tgt.back()));
  }
  const auto blocks = [&](std::size_t n) {
    return (n + static_cast<std::size_t>(params.block) - 1) / static_cast<std::size_t>(params.block);
  };
  std::vector<detail::BlockVec> vecs;
  std::size_t cbw = 0, cbh = 0;
  for (int l = params.levels - 1; l >= 0; --l) {
    const auto& s = src[static_cast<std::size_t>(l)];
    const auto& t = tgt[static_cast<std::size_t>(l)];
    const std::size_t bw = blocks(t.width), bh = blocks(t.height);
    vecs = detail::match_level(s, t, bw, bh, params.block, params.radius, vecs, cbw, cbh);
    cbw = bw;
    cbh = bh;
  }

  // Bilinear densification between block centres.
  FlowImage flow{Image<float>(source.width, source.height), Image<float>(source.width, source.height)};
  const double half = (params.block - 1) / 2.0;
  for (std::size_t y = 0; y < source.height; ++y) {
    const double gy = std::clamp((static_cast<double>(y) - half) / params.block, 0.0, static_cast<double>(cbh - 1));
    const auto y0 = static_cast<std::size_t>(std::floor(gy));
    const std::size_t y1 = std::min(y0 + 1, cbh - 1);
    const double wy = gy - static_cast<double>(y0);
    for (std::size_t x = 0; x < source.width; ++x) {
      const double gx =
          std::clamp((static_cast<double>(x) - half) / params.block, 0.0, static_cast<double>(cbw - 1));
      const auto x0 = static_cast<std::size_t>(std::floor(gx));
      const std::size_t x1 = std::min(x0 + 1, cbw - 1);
      const double wx = gx - static_cast<double>(x0);
      auto lerp = [&](auto pick) {
        const double top = pick(vecs[y0 * cbw + x0]) * (1 - wx) + pick(vecs[y0 * cbw + x1]) * wx;
        const double bot = pick(vecs[y1 * cbw + x0]) * (1 - wx) + pick(vecs[y1 * cbw + x1]) * wx;
        return static_cast<float>(top * (1 - wy) + bot * wy);
      };
      flow.u(x, y) = lerp([](const detail::BlockVec& b) { return static_cast<double>(b.u); });
      flow.v(x, y) = lerp([](const detail::BlockVec& b) { return static_cast<double>(b.v); });
    }
  }
  return flow;
}

template <typename T>
Image<float> plane_of(const Tensor<T>& t, std::size_t n, std::size_t c = 0) {
  const Shape& s = t.shape();
  Image<float> img(s.w, s.h);
  const T* p = t.ptr() + (n * s.c + c) * s.plane();
  for (std::size_t i = 0; i < s.plane(); ++i) img.data[i] = static_cast<float>(p[i]);
  return img;
}

// Flow field [N,2,H,W] from batched single-channel source/target tensors.
template <typename T>
Tensor<T> estimate_flow_tensor(const Tensor<T>& source, const Tensor<T>& target, const FlowParams& params = {}) {
  if (source.shape() != target.shape() || source.shape().c != 1) {
    throw DimensionError("estimate_flow: expected matching single-channel tensors");
  }
  const Shape& s = source.shape();
  Tensor<T> flow(Shape{s.n, 2, s.h, s.w});
  for (std::size_t n = 0; n < s.n; ++n) {
    const FlowImage f = estimate_flow(plane_of(source, n), plane_of(target, n), params);
    T* dst = flow.ptr() + n * 2 * s.plane();
    for (std::size_t i = 0; i < s.plane(); ++i) {
      dst[i] = static_cast<T>(f.u.data[i]);
      dst[s.plane() + i] = static_cast<T>(f.v.data[i]);
    }
  }
  return flow;
}

}  // namespace prn
