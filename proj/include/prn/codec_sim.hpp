#pragma once

// Desk-scale stand-in for the HEVC reconstruction path: blockwise DCT
// quantization, variance-driven quadtree partitions, PSNR and Bjontegaard
// delta rate.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "prn/errors.hpp"
#include "prn/image.hpp"
#include "prn/rng.hpp"
#include "prn/sideinfo.hpp"

namespace prn {

struct QPConfig {
  int qp = 32;

  explicit QPConfig(int q) : qp(q) {
    if (q < 0 || q > 51) throw ArgumentError("qp " + std::to_string(q) + " outside 0..51");
  }
  double step() const { return std::exp2((qp - 4) / 6.0); }
};

struct DegradeResult {
  LumaPlane recon;
  std::uint64_t bits = 0;
};

namespace detail {

inline const std::array<std::array<double, 8>, 8>& dct8_basis() {
  static const auto basis = [] {
    std::array<std::array<double, 8>, 8> c{};
    for (int k = 0; k < 8; ++k) {
      const double a = k == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int n = 0; n < 8; ++n) c[k][n] = a * std::cos((2 * n + 1) * k * std::numbers::pi / 16.0);
    }
    return c;
  }();
  return basis;
}

using Block8 = std::array<double, 64>;

inline Block8 dct8(const Block8& in) {
  const auto& c = dct8_basis();
  Block8 tmp{}, out{};
  for (int k = 0; k < 8; ++k)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int y = 0; y < 8; ++y) s += c[k][y] * in[y * 8 + x];
      tmp[k * 8 + x] = s;
    }
  for (int k = 0; k < 8; ++k)
    for (int l = 0; l < 8; ++l) {
      double s = 0;
      for (int x = 0; x < 8; ++x) s += tmp[k * 8 + x] * c[l][x];
      out[k * 8 + l] = s;
    }
  return out;
}

inline Block8 idct8(const Block8& in) {
  const auto& c = dct8_basis();
  Block8 tmp{}, out{};
  for (int y = 0; y < 8; ++y)
    for (int l = 0; l < 8; ++l) {
      double s = 0;
      for (int k = 0; k < 8; ++k) s += c[k][y] * in[k * 8 + l];
      tmp[y * 8 + l] = s;
    }
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      double s = 0;
      for (int l = 0; l < 8; ++l) s += tmp[y * 8 + l] * c[l][x];
      out[y * 8 + x] = s;
    }
  return out;
}

// Golomb-like cost of one quantized level.
inline std::uint64_t level_bits(long level) {
  if (level == 0) return 0;
  const auto mag = static_cast<std::uint64_t>(level < 0 ? -level : level);
  const auto lg = static_cast<std::uint64_t>(std::bit_width(mag) - 1);
  return 1 + 2 * lg + 1;
}

}  // namespace detail

// 8x8 orthonormal DCT, uniform quantization with step 2^((qp-4)/6), inverse
// DCT, clamp and round. The frame is edge-padded to a multiple of 8.
inline DegradeResult degrade(const LumaPlane& frame, QPConfig qp) {
  if (frame.empty()) throw ArgumentError("degrade: empty frame");
  const std::size_t pw = (frame.width + 7) / 8 * 8;
  const std::size_t ph = (frame.height + 7) / 8 * 8;
  const double step = qp.step();
  DegradeResult res;
  res.recon = LumaPlane(frame.width, frame.height);
  for (std::size_t by = 0; by < ph; by += 8) {
    for (std::size_t bx = 0; bx < pw; bx += 8) {
      detail::Block8 blk{};
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x) {
          const std::size_t sx = std::min(bx + x, frame.width - 1);
          const std::size_t sy = std::min(by + y, frame.height - 1);
          blk[y * 8 + x] = frame(sx, sy);
        }
      detail::Block8 coef = detail::dct8(blk);
      for (double& c : coef) {
        const long level = std::lround(c / step);
        res.bits += detail::level_bits(level);
        c = static_cast<double>(level) * step;
      }
      const detail::Block8 rec = detail::idct8(coef);
      for (std::size_t y = 0; y < 8 && by + y < frame.height; ++y)
        for (std::size_t x = 0; x < 8 && bx + x < frame.width; ++x)
          res.recon(bx + x, by + y) = clamp_round_u8(rec[y * 8 + x]);
    }
  }
  return res;
}

// Per-depth variance thresholds for depths 0..2.
using SplitThresholds = std::array<double, kMaxCuDepth>;
inline constexpr SplitThresholds kDefaultSplitThresholds{400.0, 200.0, 100.0};

template <typename T>
double cu_variance(const Image<T>& frame, const CuRect& r) {
  const std::size_t n = r.area();
  if (n == 0) return 0.0;
  double s = 0.0, s2 = 0.0;
  for (std::size_t y = r.y0; y < r.y1; ++y)
    for (std::size_t x = r.x0; x < r.x1; ++x) {
      const double v = static_cast<double>(frame(x, y));
      s += v;
      s2 += v * v;
    }
  const double mean = s / static_cast<double>(n);
  return std::max(0.0, s2 / static_cast<double>(n) - mean * mean);
}

namespace detail {

template <typename T>
void split_by_variance(const Image<T>& frame, CUNode& node, const SplitThresholds& thr) {
  if (node.depth >= kMaxCuDepth) return;
  const CuRect r = clip_cu(node, frame.width, frame.height);
  if (r.area() == 0) return;
  if (cu_variance(frame, r) < thr[static_cast<std::size_t>(node.depth)]) return;
  split_node(node);
  for (auto& c : node.children) split_by_variance(frame, c, thr);
}

}  // namespace detail

// A CU at depth d < 3 splits when the variance of its in-frame samples
// reaches thresholds[d].
template <typename T>
PartitionForest build_partition(const Image<T>& frame, const SplitThresholds& thresholds = kDefaultSplitThresholds) {
  PartitionForest f = unsplit_forest(frame.width, frame.height);
  for (auto& root : f.roots) detail::split_by_variance(frame, root, thresholds);
  return f;
}

inline constexpr double kPsnrCap = 100.0;

template <typename A, typename B>
double sse(const Image<A>& a, const Image<B>& b) {
  if (!a.same_size(b)) throw DimensionError("sse: dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    s += d * d;
  }
  return s;
}

// 8-bit PSNR; identical planes return kPsnrCap.
template <typename A, typename B>
double psnr(const Image<A>& a, const Image<B>& b) {
  if (!a.same_size(b)) throw DimensionError("psnr: dimension mismatch");
  if (a.empty()) throw ArgumentError("psnr: empty planes");
  const double mse = sse(a, b) / static_cast<double>(a.data.size());
  if (mse == 0.0) return kPsnrCap;
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

// ---------------------------------------------------------------------------
// Bjontegaard delta rate

struct RDPoint {
  double rate = 0;
  double psnr = 0;
};

// c[0] + c[1] x + c[2] x^2 + c[3] x^3
struct Cubic {
  std::array<double, 4> c{};

  double operator()(double x) const { return ((c[3] * x + c[2]) * x + c[1]) * x + c[0]; }
  double antiderivative(double x) const {
    return (((c[3] / 4.0 * x + c[2] / 3.0) * x + c[1] / 2.0) * x + c[0]) * x;
  }
  double integral(double lo, double hi) const { return antiderivative(hi) - antiderivative(lo); }
};

inline void validate_curve(const std::vector<RDPoint>& curve) {
  if (curve.size() < 4) throw ArgumentError("bd_rate: a curve needs at least 4 points");
  for (const auto& p : curve) {
    if (!(p.rate > 0.0) || !std::isfinite(p.rate) || !std::isfinite(p.psnr)) {
      throw ArgumentError("bd_rate: rates must be positive and finite");
    }
  }
}

// Least-squares cubic of log10(rate) as a function of PSNR.
inline Cubic fit_log_rate(const std::vector<RDPoint>& curve) {
  validate_curve(curve);
  Eigen::MatrixXd a(static_cast<Eigen::Index>(curve.size()), 4);
  Eigen::VectorXd b(static_cast<Eigen::Index>(curve.size()));
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const double x = curve[i].psnr;
    const auto r = static_cast<Eigen::Index>(i);
    a(r, 0) = 1.0;
    a(r, 1) = x;
    a(r, 2) = x * x;
    a(r, 3) = x * x * x;
    b(r) = std::log10(curve[i].rate);
  }
  const Eigen::VectorXd sol = a.colPivHouseholderQr().solve(b);
  Cubic c;
  for (int k = 0; k < 4; ++k) c.c[static_cast<std::size_t>(k)] = sol(k);
  return c;
}

struct PsnrInterval {
  double lo = 0;
  double hi = 0;
};

inline PsnrInterval psnr_overlap(const std::vector<RDPoint>& a, const std::vector<RDPoint>& b) {
  auto range = [](const std::vector<RDPoint>& c) {
    auto [mn, mx] = std::minmax_element(c.begin(), c.end(),
                                        [](const RDPoint& p, const RDPoint& q) { return p.psnr < q.psnr; });
    return std::pair{mn->psnr, mx->psnr};
  };
  const auto [alo, ahi] = range(a);
  const auto [blo, bhi] = range(b);
  PsnrInterval iv{std::max(alo, blo), std::min(ahi, bhi)};
  if (!(iv.hi > iv.lo)) throw ArgumentError("bd_rate: non-overlapping PSNR ranges");
  return iv;
}

// Average rate difference in percent at equal PSNR; negative = saving.
inline double bd_rate(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test) {
  validate_curve(anchor);
  validate_curve(test);
  const PsnrInterval iv = psnr_overlap(anchor, test);
  const Cubic pa = fit_log_rate(anchor);
  const Cubic pt = fit_log_rate(test);
  const double avg = (pt.integral(iv.lo, iv.hi) - pa.integral(iv.lo, iv.hi)) / (iv.hi - iv.lo);
  return (std::pow(10.0, avg) - 1.0) * 100.0;
}

inline std::vector<RDPoint> parse_rd_curve(const std::string& text) {
  std::vector<RDPoint> out;
  std::istringstream in(text);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    RDPoint p;
    std::string extra;
    if (!(ls >> p.rate >> p.psnr) || (ls >> extra)) throw ParseError(n, "expected \"rate psnr\"");
    out.push_back(p);
  }
  return out;
}

inline std::string format_rd_curve(const std::vector<RDPoint>& curve) {
  std::ostringstream out;
  out.precision(10);
  for (const auto& p : curve) out << p.rate << " " << p.psnr << "\n";
  return out.str();
}

// ---------------------------------------------------------------------------
// Synthetic content

// Procedural texture evaluated at integer canvas coordinates: a few oriented
// sinusoids, hard-edged discs and hashed per-pixel grain. Content at (X, Y)
// is independent of the viewing window, so translated windows form an exact
// translating sequence.
class SyntheticScene {
 public:
  explicit SyntheticScene(std::uint64_t seed) : seed_(seed) {
    Rng rng(seed);
    for (auto& w : waves_) {
      const double angle = rng.uniform(0.0, std::numbers::pi);
      const double freq = rng.uniform(0.02, 0.35);
      w = Wave{std::cos(angle) * freq, std::sin(angle) * freq, rng.uniform(0.0, 6.283), rng.uniform(6.0, 22.0)};
    }
    for (auto& d : discs_) {
      d = Disc{rng.uniform(-40.0, 260.0), rng.uniform(-40.0, 260.0), rng.uniform(6.0, 40.0), rng.uniform(-45.0, 45.0)};
    }
  }

  double value(long x, long y) const {
    double v = 128.0;
    for (const auto& w : waves_) v += w.amp * std::sin(w.fx * static_cast<double>(x) + w.fy * static_cast<double>(y) + w.phase);
    for (const auto& d : discs_) {
      const double dx = static_cast<double>(x) - d.cx;
      const double dy = static_cast<double>(y) - d.cy;
      if (dx * dx + dy * dy < d.r * d.r) v += d.delta;
    }
    const std::uint64_t h = derive_seed(seed_, static_cast<std::uint64_t>(x) * 0x1F1F1F1Full ^
                                                   static_cast<std::uint64_t>(y) * 0x9E3779B1ull);
    v += (static_cast<double>(h >> 11) * 0x1.0p-53 - 0.5) * 12.0;
    return std::clamp(v, 0.0, 255.0);
  }

  LumaPlane render(std::size_t width, std::size_t height, long ox, long oy) const {
    LumaPlane img(width, height);
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        img(x, y) = clamp_round_u8(value(ox + static_cast<long>(x), oy + static_cast<long>(y)));
    return img;
  }

 private:
  struct Wave {
    double fx, fy, phase, amp;
  };
  struct Disc {
    double cx, cy, r, delta;
  };
  std::uint64_t seed_;
  std::array<Wave, 6> waves_{};
  std::array<Disc, 10> discs_{};
};

inline LumaPlane synthetic_image(std::size_t width, std::size_t height, std::uint64_t seed) {
  return SyntheticScene(seed).render(width, height, 0, 0);
}

// Frame t shows the scene window at (t*vx, t*vy): content moves by (-vx, -vy)
// pixels per frame. Velocities are drawn from [-max_speed, max_speed].
inline std::vector<LumaPlane> synthetic_sequence(std::size_t width, std::size_t height, std::size_t frames,
                                                 std::uint64_t seed, int max_speed = 2) {
  Rng rng(derive_seed(seed, 0xF10));
  const int vx = rng.range(-max_speed, max_speed);
  const int vy = rng.range(-max_speed, max_speed);
  SyntheticScene scene(seed);
  std::vector<LumaPlane> out;
  for (std::size_t t = 0; t < frames; ++t) {
    out.push_back(scene.render(width, height, static_cast<long>(t) * vx, static_cast<long>(t) * vy));
  }
  return out;
}

}  // namespace prn
