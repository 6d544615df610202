#pragma once

// Quadtree coding-unit partitions and Multi-scale Mean-value-of-CU (MM-CU)
// side-information maps.
//
// Partition file format (UTF-8 text):
//   line 1:  "W H"
//   then one line per 64x64 CTU in raster order holding a preorder quadtree
//   string over {0,1}: '1' = split followed by its four subtrees
//   (top-left, top-right, bottom-left, bottom-right), '0' = leaf.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "prn/errors.hpp"
#include "prn/image.hpp"

namespace prn {

inline constexpr std::size_t kCtuSize = 64;
inline constexpr int kMaxCuDepth = 3;
inline constexpr int kMmcuLevels = kMaxCuDepth + 1;

struct CUNode {
  int depth = 0;
  std::size_t x = 0;  // origin in frame coordinates
  std::size_t y = 0;
  std::vector<CUNode> children;  // empty for leaves, otherwise exactly 4

  bool split() const { return !children.empty(); }
  std::size_t size() const { return kCtuSize >> depth; }
};

struct PartitionForest {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<CUNode> roots;  // raster order

  std::size_t ctu_cols() const { return (width + kCtuSize - 1) / kCtuSize; }
  std::size_t ctu_rows() const { return (height + kCtuSize - 1) / kCtuSize; }
};

// Creates the four children of a node at half extent.
inline void split_node(CUNode& node) {
  const std::size_t half = node.size() / 2;
  node.children.clear();
  for (int i = 0; i < 4; ++i) {
    CUNode c;
    c.depth = node.depth + 1;
    c.x = node.x + (i % 2) * half;
    c.y = node.y + (i / 2) * half;
    node.children.push_back(std::move(c));
  }
}

inline PartitionForest unsplit_forest(std::size_t width, std::size_t height) {
  PartitionForest f;
  f.width = width;
  f.height = height;
  for (std::size_t r = 0; r < f.ctu_rows(); ++r) {
    for (std::size_t c = 0; c < f.ctu_cols(); ++c) {
      CUNode root;
      root.x = c * kCtuSize;
      root.y = r * kCtuSize;
      f.roots.push_back(std::move(root));
    }
  }
  return f;
}

namespace detail {

inline void serialize_node(const CUNode& n, std::string& out) {
  out.push_back(n.split() ? '1' : '0');
  for (const auto& c : n.children) serialize_node(c, out);
}

inline void parse_node(std::string_view s, std::size_t& pos, CUNode& node, std::size_t line) {
  if (pos >= s.size()) throw ParseError(line, "unterminated quadtree");
  const char ch = s[pos++];
  if (ch == '0') return;
  if (ch != '1') throw ParseError(line, std::string("invalid character '") + ch + "' in quadtree");
  if (node.depth >= kMaxCuDepth) throw ParseError(line, "split flag at depth 3");
  split_node(node);
  for (auto& c : node.children) parse_node(s, pos, c, line);
}

}  // namespace detail

inline std::string serialize_ctu(const CUNode& root) {
  std::string s;
  detail::serialize_node(root, s);
  return s;
}

inline std::string serialize_partition(const PartitionForest& f) {
  std::string out = std::to_string(f.width) + " " + std::to_string(f.height) + "\n";
  for (const auto& r : f.roots) {
    detail::serialize_node(r, out);
    out.push_back('\n');
  }
  return out;
}

inline PartitionForest parse_partition(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    const std::size_t nl = text.find('\n', start);
    if (nl == std::string_view::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  if (lines.empty()) throw ParseError(1, "missing header");

  std::size_t width = 0, height = 0;
  {
    const std::string header(lines[0]);
    const auto sp = header.find(' ');
    std::size_t used_w = 0, used_h = 0;
    try {
      if (sp == std::string::npos) throw std::invalid_argument("header");
      width = std::stoul(header.substr(0, sp), &used_w);
      height = std::stoul(header.substr(sp + 1), &used_h);
    } catch (const std::exception&) {
      throw ParseError(1, "header must be \"W H\"");
    }
    if (used_w != sp || used_h != header.size() - sp - 1 || header[0] == '-' || header[sp + 1] == '-') {
      throw ParseError(1, "header must be \"W H\"");
    }
    if (width == 0 || height == 0) throw ParseError(1, "frame dimensions must be positive");
  }

  PartitionForest f = unsplit_forest(width, height);
  const std::size_t expected = f.roots.size();
  if (lines.size() - 1 != expected) {
    throw ParseError(lines.size() < expected + 1 ? lines.size() + 1 : expected + 2,
                     "CTU count mismatch: expected " + std::to_string(expected) + " CTU lines for " +
                         std::to_string(width) + "x" + std::to_string(height) + ", found " +
                         std::to_string(lines.size() - 1));
  }
  for (std::size_t i = 0; i < expected; ++i) {
    const std::size_t line = i + 2;
    std::size_t pos = 0;
    detail::parse_node(lines[i + 1], pos, f.roots[i], line);
    if (pos != lines[i + 1].size()) throw ParseError(line, "trailing characters after quadtree");
  }
  return f;
}

// Visits every leaf CU; clipped leaves outside the frame are visited too.
inline void for_each_leaf(const CUNode& n, const std::function<void(const CUNode&)>& fn) {
  if (!n.split()) {
    fn(n);
    return;
  }
  for (const auto& c : n.children) for_each_leaf(c, fn);
}

// In-frame extent of a CU: [x0, x1) x [y0, y1). Empty when fully outside.
struct CuRect {
  std::size_t x0, y0, x1, y1;
  std::size_t area() const { return (x1 > x0 && y1 > y0) ? (x1 - x0) * (y1 - y0) : 0; }
};

inline CuRect clip_cu(const CUNode& n, std::size_t width, std::size_t height) {
  const std::size_t x1 = std::min(n.x + n.size(), width);
  const std::size_t y1 = std::min(n.y + n.size(), height);
  return CuRect{std::min(n.x, width), std::min(n.y, height), x1, y1};
}

template <typename T>
double cu_sum(const Image<T>& frame, const CuRect& r) {
  double s = 0.0;
  for (std::size_t y = r.y0; y < r.y1; ++y) {
    for (std::size_t x = r.x0; x < r.x1; ++x) s += static_cast<double>(frame(x, y));
  }
  return s;
}

struct MMCUMaps {
  // level[0] is the CTU-level (coarsest) map, level[3] the 8x8 level.
  std::array<Image<float>, kMmcuLevels> level;
};

namespace detail {

template <typename T>
void fill_mmcu(const Image<T>& frame, const CUNode& n, MMCUMaps& maps) {
  const CuRect r = clip_cu(n, frame.width, frame.height);
  if (r.area() == 0) return;
  const float mean = static_cast<float>(cu_sum(frame, r) / static_cast<double>(r.area()));
  // A leaf keeps its value at every finer level.
  const int last = n.split() ? n.depth : kMaxCuDepth;
  for (int l = n.depth; l <= last; ++l) {
    auto& m = maps.level[static_cast<std::size_t>(l)];
    for (std::size_t y = r.y0; y < r.y1; ++y) {
      std::fill_n(m.data.begin() + static_cast<std::ptrdiff_t>(y * m.width + r.x0), r.x1 - r.x0, mean);
    }
  }
  for (const auto& c : n.children) fill_mmcu(frame, c, maps);
}

inline void check_forest_matches(std::size_t w, std::size_t h, const PartitionForest& forest) {
  if (w != forest.width || h != forest.height) {
    throw DimensionError("partition forest " + std::to_string(forest.width) + "x" +
                         std::to_string(forest.height) + " does not match frame " + std::to_string(w) +
                         "x" + std::to_string(h));
  }
  if (forest.roots.size() != forest.ctu_cols() * forest.ctu_rows()) {
    throw DimensionError("partition forest has wrong CTU count");
  }
}

}  // namespace detail

// Mean of the enclosing CU at each quadtree depth, computed top-down; the
// recursion stops at leaves, whose mean is carried to all finer levels.
template <typename T>
MMCUMaps generate_mmcu(const Image<T>& frame, const PartitionForest& forest) {
  detail::check_forest_matches(frame.width, frame.height, forest);
  MMCUMaps maps;
  for (auto& m : maps.level) m = Image<float>(frame.width, frame.height, 0.0f);
  for (const auto& root : forest.roots) detail::fill_mmcu(frame, root, maps);
  return maps;
}

// Independent per-pixel reference: for each pixel and level, walk from the
// CTU root down to depth min(level, leaf depth) and average that CU by direct
// summation.
template <typename T>
MMCUMaps mmcu_oracle(const Image<T>& frame, const PartitionForest& forest) {
  detail::check_forest_matches(frame.width, frame.height, forest);
  MMCUMaps maps;
  for (auto& m : maps.level) m = Image<float>(frame.width, frame.height, 0.0f);
  const std::size_t cols = forest.ctu_cols();
  for (std::size_t y = 0; y < frame.height; ++y) {
    for (std::size_t x = 0; x < frame.width; ++x) {
      const CUNode& root = forest.roots[(y / kCtuSize) * cols + x / kCtuSize];
      for (int l = 0; l < kMmcuLevels; ++l) {
        const CUNode* n = &root;
        while (n->depth < l && n->split()) {
          const std::size_t half = n->size() / 2;
          const std::size_t qx = (x - n->x) >= half ? 1 : 0;
          const std::size_t qy = (y - n->y) >= half ? 1 : 0;
          n = &n->children[qy * 2 + qx];
        }
        const CuRect r = clip_cu(*n, frame.width, frame.height);
        maps.level[static_cast<std::size_t>(l)](x, y) =
            static_cast<float>(cu_sum(frame, r) / static_cast<double>(r.area()));
      }
    }
  }
  return maps;
}

}  // namespace prn
