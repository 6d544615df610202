#pragma once

// Coding-loop driver: H/L frame classification, reference selection, coding
// order, CTU-level filter switching and the end-to-end in-loop filtering run.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "prn/codec_sim.hpp"
#include "prn/errors.hpp"
#include "prn/image.hpp"
#include "prn/nn/prcnn.hpp"
#include "prn/nn/prrnn.hpp"
#include "prn/nn/train.hpp"
#include "prn/sideinfo.hpp"

namespace prn {

enum class SliceType { I, P, B };
enum class FrameClass { H, L };
enum class CodingMode { AI, LDB, LDP, RA };

inline char slice_char(SliceType s) { return s == SliceType::I ? 'I' : s == SliceType::P ? 'P' : 'B'; }

inline SliceType parse_slice_type(const std::string& s) {
  if (s == "I") return SliceType::I;
  if (s == "P") return SliceType::P;
  if (s == "B") return SliceType::B;
  throw ParseError(0, "unknown slice type '" + s + "'");
}

inline const char* class_name(FrameClass c) { return c == FrameClass::H ? "H" : "L"; }

inline const char* mode_name(CodingMode m) {
  switch (m) {
    case CodingMode::AI: return "AI";
    case CodingMode::LDB: return "LDB";
    case CodingMode::LDP: return "LDP";
    case CodingMode::RA: return "RA";
  }
  return "?";
}

inline CodingMode parse_mode(const std::string& s) {
  for (CodingMode m : {CodingMode::AI, CodingMode::LDB, CodingMode::LDP, CodingMode::RA}) {
    if (s == mode_name(m)) return m;
  }
  throw ConfigError("unknown coding mode '" + s + "' (expected AI, LDB, LDP or RA)");
}

// Slice type each configuration assigns to a POC.
inline SliceType slice_type_for(CodingMode m, int poc) {
  if (m == CodingMode::AI || poc == 0) return SliceType::I;
  return m == CodingMode::LDP ? SliceType::P : SliceType::B;
}

inline FrameClass classify_frame(int poc, SliceType slice) {
  return (slice == SliceType::I || poc % 4 == 0) ? FrameClass::H : FrameClass::L;
}

inline int peak_quality_poc(int n, int gop) { return n - (n % gop); }

// Nearest decoded POC; equidistant candidates resolve to the earlier one.
inline int nearest_reference(int poc, const std::set<int>& decoded) {
  if (decoded.empty()) throw ArgumentError("nearest_reference: no decoded frames");
  int best = -1;
  for (int p : decoded) {
    if (p == poc) continue;
    if (best < 0 || std::abs(p - poc) < std::abs(best - poc)) best = p;
  }
  if (best < 0) throw ArgumentError("nearest_reference: no decoded frame other than the current one");
  return best;
}

namespace detail {

inline void bisect_order(int lo, int hi, int limit, std::vector<int>& out) {
  if (hi - lo < 2) return;
  const int mid = (lo + hi) / 2;
  if (mid < limit) out.push_back(mid);
  bisect_order(lo, mid, limit, out);
  bisect_order(mid, hi, limit, out);
}

}  // namespace detail

// AI/LD: display order. RA: per GOP the anchor base+gop, then a dyadic
// bisection of the interval, e.g. [0, 4, 2, 1, 3] for gop 4.
inline std::vector<int> coding_order(CodingMode m, std::size_t frames, int gop = 4) {
  std::vector<int> out;
  const int n = static_cast<int>(frames);
  if (m != CodingMode::RA) {
    for (int p = 0; p < n; ++p) out.push_back(p);
    return out;
  }
  if (gop < 1) throw ArgumentError("coding_order: GOP size must be positive");
  if (n > 0) out.push_back(0);
  for (int base = 0; base + 1 < n; base += gop) {
    if (base + gop < n) out.push_back(base + gop);
    detail::bisect_order(base, base + gop, n, out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// CTU-level RDO

struct RdoMask {
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::vector<std::uint8_t> use_filtered;  // row-major, 1 = filtered block

  bool at(std::size_t c, std::size_t r) const { return use_filtered[r * cols + c] != 0; }
  double selected_pct() const {
    if (use_filtered.empty()) return 0.0;
    const auto on = std::count(use_filtered.begin(), use_filtered.end(), std::uint8_t{1});
    return 100.0 * static_cast<double>(on) / static_cast<double>(use_filtered.size());
  }
  std::string str() const {
    std::string s;
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < cols; ++c) s += at(c, r) ? '1' : '0';
      s += '\n';
    }
    return s;
  }
};

struct RdoResult {
  LumaPlane merged;
  RdoMask mask;
};

inline double block_sse(const LumaPlane& a, const LumaPlane& b, const CuRect& r) {
  double s = 0;
  for (std::size_t y = r.y0; y < r.y1; ++y)
    for (std::size_t x = r.x0; x < r.x1; ++x) {
      const double d = static_cast<double>(a(x, y)) - static_cast<double>(b(x, y));
      s += d * d;
    }
  return s;
}

// Per 64x64 CTU keeps whichever of filtered/unfiltered is closer to the
// original; ties keep the filtered block. The one-bit switch costs the same
// either way, so only distortion is compared.
inline RdoResult ctu_rdo(const LumaPlane& original, const LumaPlane& unfiltered, const LumaPlane& filtered) {
  if (!original.same_size(unfiltered) || !original.same_size(filtered)) {
    throw DimensionError("ctu_rdo: plane dimensions differ");
  }
  RdoResult res{unfiltered, {}};
  res.mask.cols = (original.width + kCtuSize - 1) / kCtuSize;
  res.mask.rows = (original.height + kCtuSize - 1) / kCtuSize;
  res.mask.use_filtered.assign(res.mask.cols * res.mask.rows, 0);
  for (std::size_t r = 0; r < res.mask.rows; ++r) {
    for (std::size_t c = 0; c < res.mask.cols; ++c) {
      const CuRect rect{c * kCtuSize, r * kCtuSize, std::min((c + 1) * kCtuSize, original.width),
                        std::min((r + 1) * kCtuSize, original.height)};
      if (block_sse(original, filtered, rect) > block_sse(original, unfiltered, rect)) continue;
      res.mask.use_filtered[r * res.mask.cols + c] = 1;
      for (std::size_t y = rect.y0; y < rect.y1; ++y)
        for (std::size_t x = rect.x0; x < rect.x1; ++x) res.merged(x, y) = filtered(x, y);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// In-loop run

struct FrameRecord {
  int poc = 0;
  SliceType slice = SliceType::I;
  int qp = 37;
  LumaPlane raw;
  LumaPlane degraded;
  std::optional<LumaPlane> filtered;
  PartitionForest partition;

  FrameClass klass() const { return classify_frame(poc, slice); }
};

struct CodingConfig {
  CodingMode mode = CodingMode::LDP;
  int gop = 4;
  bool rdo = true;

  // RDO never runs in all-intra.
  bool rdo_active() const { return rdo && mode != CodingMode::AI; }
};

// One model per trained QP; untested QPs use the closest trained one (the
// lower QP on a tie).
struct ModelSet {
  std::map<int, Prcnn<float>> prcnn;
  std::map<int, Prrnn<float>> prrnn;

  template <typename M>
  static const std::pair<const int, M>& nearest(const std::map<int, M>& models, int qp, const char* what) {
    if (models.empty()) throw StateError(std::string("no ") + what + " model loaded");
    const std::pair<const int, M>* best = nullptr;
    for (const auto& e : models) {
      if (!best || std::abs(e.first - qp) < std::abs(best->first - qp)) best = &e;
    }
    return *best;
  }
};

struct Invocation {
  int poc = 0;
  std::string network;  // "prcnn" or "prrnn"
  int model_qp = 0;
  int neighbour = -1;
  int peak = -1;
};

struct FrameReport {
  int poc = 0;
  FrameClass klass = FrameClass::H;
  double psnr_before = 0;
  double psnr_after = 0;
  double rdo_pct = 0;
};

struct InloopResult {
  std::vector<FrameReport> frames;  // display order
  std::vector<Invocation> invocations;  // coding order
  std::map<int, RdoMask> masks;

  double mean_before() const { return mean([](const FrameReport& r) { return r.psnr_before; }); }
  double mean_after() const { return mean([](const FrameReport& r) { return r.psnr_after; }); }
  double mean_rdo_pct() const { return mean([](const FrameReport& r) { return r.rdo_pct; }); }

 private:
  template <typename F>
  double mean(F f) const {
    if (frames.empty()) return 0.0;
    double s = 0;
    for (const auto& r : frames) s += f(r);
    return s / static_cast<double>(frames.size());
  }
};

inline LumaPlane apply_prcnn(const Prcnn<float>& model, const LumaPlane& degraded, const PartitionForest& forest) {
  const CnnSample s = make_cnn_sample(degraded, forest, degraded);
  std::array<Tensor<float>, kMmcuLevels> maps;
  for (std::size_t l = 0; l < maps.size(); ++l) maps[l] = plane_tensor<float>(s.maps[l]);
  Graph<float> g = Graph<float>::inference();
  return tensor_to_luma(model.forward(g, plane_tensor<float>(s.input), maps));
}

inline LumaPlane apply_prrnn(const Prrnn<float>& model, const LumaPlane& current, const LumaPlane& neighbour,
                             const LumaPlane& peak) {
  const RnnSample s = make_rnn_sample(current, neighbour, peak, current);
  std::array<Tensor<float>, kStates> frames;
  for (std::size_t i = 0; i < kStates; ++i) frames[i] = plane_tensor<float>(s.frames[i]);
  Graph<float> g = Graph<float>::inference();
  return tensor_to_luma(model.forward(g, frames));
}

// Filters `frames` (indexed by POC 0..N-1) in coding order. H-frames go
// through PR-CNN with their MM-CU maps, L-frames through PR-RNN with the
// filtered nearest reference and the filtered peak-quality frame.
inline InloopResult run_inloop(std::vector<FrameRecord>& frames, const CodingConfig& cfg, const ModelSet& models) {
  if (cfg.gop < 1) throw ArgumentError("GOP size must be positive");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const auto& f = frames[i];
    if (f.poc != static_cast<int>(i)) throw ArgumentError("frames must be listed by POC 0..N-1");
    if (!f.raw.same_size(f.degraded)) {
      throw DimensionError("frame " + std::to_string(f.poc) + ": original and reconstruction sizes differ");
    }
  }
  InloopResult res;
  std::set<int> decoded;
  for (int poc : coding_order(cfg.mode, frames.size(), cfg.gop)) {
    FrameRecord& fr = frames[static_cast<std::size_t>(poc)];
    LumaPlane out;
    Invocation inv;
    inv.poc = poc;
    const bool use_cnn = cfg.mode == CodingMode::AI || fr.klass() == FrameClass::H;
    if (use_cnn) {
      const auto& [qp, model] = ModelSet::nearest(models.prcnn, fr.qp, "PR-CNN");
      inv.network = "prcnn";
      inv.model_qp = qp;
      out = apply_prcnn(model, fr.degraded, fr.partition);
    } else {
      inv.neighbour = nearest_reference(poc, decoded);
      inv.peak = peak_quality_poc(poc, cfg.gop);
      for (int ref : {inv.neighbour, inv.peak}) {
        if (!decoded.count(ref) || !frames[static_cast<std::size_t>(ref)].filtered) {
          throw InvariantError("frame " + std::to_string(poc) + " references POC " + std::to_string(ref) +
                               " before it was filtered");
        }
      }
      const auto& [qp, model] = ModelSet::nearest(models.prrnn, fr.qp, "PR-RNN");
      inv.network = "prrnn";
      inv.model_qp = qp;
      out = apply_prrnn(model, fr.degraded, *frames[static_cast<std::size_t>(inv.neighbour)].filtered,
                        *frames[static_cast<std::size_t>(inv.peak)].filtered);
    }
    double pct = 100.0;
    if (cfg.rdo_active()) {
      RdoResult r = ctu_rdo(fr.raw, fr.degraded, out);
      out = std::move(r.merged);
      pct = r.mask.selected_pct();
      res.masks[poc] = std::move(r.mask);
    }
    fr.filtered = std::move(out);
    decoded.insert(poc);
    res.invocations.push_back(inv);
  }
  for (const auto& fr : frames) {
    FrameReport r;
    r.poc = fr.poc;
    r.klass = fr.klass();
    r.psnr_before = psnr(fr.raw, fr.degraded);
    r.psnr_after = psnr(fr.raw, *fr.filtered);
    r.rdo_pct = res.masks.count(fr.poc) ? res.masks.at(fr.poc).selected_pct() : 100.0;
    res.frames.push_back(r);
  }
  return res;
}

// "poc class psnr_before psnr_after rdo_selected_pct" per frame, then a
// line of sequence averages.
inline std::string format_report(const InloopResult& r) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << "# poc class psnr_before psnr_after rdo_selected_pct\n";
  for (const auto& f : r.frames) {
    out << f.poc << ' ' << class_name(f.klass) << ' ' << f.psnr_before << ' ' << f.psnr_after << ' ' << f.rdo_pct
        << '\n';
  }
  out << "average - " << r.mean_before() << ' ' << r.mean_after() << ' ' << r.mean_rdo_pct() << '\n';
  return out.str();
}

inline std::string format_invocations(const InloopResult& r) {
  std::ostringstream out;
  out << "# poc network model_qp neighbour peak\n";
  for (const auto& i : r.invocations) {
    out << i.poc << ' ' << i.network << ' ' << i.model_qp << ' ' << i.neighbour << ' ' << i.peak << '\n';
  }
  return out.str();
}

}  // namespace prn
