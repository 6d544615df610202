#pragma once

// Single-channel planes and their file formats (binary PGM, raw planar luma).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "prn/errors.hpp"

namespace prn {

template <typename T>
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<T> data;

  Image() = default;
  Image(std::size_t w, std::size_t h, T fill = T{}) : width(w), height(h), data(w * h, fill) {}

  bool empty() const { return data.empty(); }
  std::size_t size() const { return data.size(); }
  T& operator()(std::size_t x, std::size_t y) { return data[y * width + x]; }
  const T& operator()(std::size_t x, std::size_t y) const { return data[y * width + x]; }
  template <typename U>
  bool same_size(const Image<U>& o) const {
    return width == o.width && height == o.height;
  }
  bool operator==(const Image&) const = default;
};

using LumaPlane = Image<std::uint8_t>;

inline std::uint8_t clamp_round_u8(double v) {
  return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
}

template <typename T>
Image<T> crop(const Image<T>& src, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  if (x0 + w > src.width || y0 + h > src.height) throw DimensionError("crop: window outside image");
  Image<T> out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    std::copy_n(src.data.begin() + static_cast<std::ptrdiff_t>((y0 + y) * src.width + x0), w,
                out.data.begin() + static_cast<std::ptrdiff_t>(y * w));
  }
  return out;
}

template <typename T>
Image<T> flip(const Image<T>& src, bool horizontal, bool vertical) {
  Image<T> out(src.width, src.height);
  for (std::size_t y = 0; y < src.height; ++y) {
    const std::size_t sy = vertical ? src.height - 1 - y : y;
    for (std::size_t x = 0; x < src.width; ++x) {
      const std::size_t sx = horizontal ? src.width - 1 - x : x;
      out(x, y) = src(sx, sy);
    }
  }
  return out;
}

inline void write_pgm(const std::filesystem::path& path, const LumaPlane& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << "P5\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (!f) throw IoError("short write to " + path.string());
}

inline LumaPlane read_pgm(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  auto token = [&]() {
    std::string t;
    while (f >> std::ws && f.peek() == '#') {
      std::string skip;
      std::getline(f, skip);
    }
    f >> t;
    return t;
  };
  if (token() != "P5") throw IoError(path.string() + ": not a binary PGM (P5)");
  std::size_t w = 0, h = 0;
  int maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoi(token());
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed PGM header");
  }
  if (maxval != 255) throw IoError(path.string() + ": only 8-bit PGM supported");
  f.get();
  LumaPlane img(w, h);
  f.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.data.size())) throw IoError(path.string() + ": truncated PGM");
  return img;
}

// Reads `frames` luma planes from a raw 8-bit file. With chroma420 set, each
// frame is followed by two quarter-size chroma planes which are skipped.
inline std::vector<LumaPlane> read_raw_luma(const std::filesystem::path& path, std::size_t width,
                                            std::size_t height, std::size_t frames, bool chroma420 = false) {
  if (width == 0 || height == 0) throw ArgumentError("raw reader: zero frame size");
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  const std::size_t luma = width * height;
  const std::size_t skip = chroma420 ? 2 * ((width + 1) / 2) * ((height + 1) / 2) : 0;
  std::vector<LumaPlane> out;
  for (std::size_t i = 0; i < frames; ++i) {
    LumaPlane p(width, height);
    f.read(reinterpret_cast<char*>(p.data.data()), static_cast<std::streamsize>(luma));
    if (f.gcount() != static_cast<std::streamsize>(luma)) {
      throw IoError(path.string() + ": file holds fewer than " + std::to_string(frames) + " frames");
    }
    f.ignore(static_cast<std::streamsize>(skip));
    out.push_back(std::move(p));
  }
  return out;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << text;
}

}  // namespace prn
