#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "gground/error.hpp"
#include "gground/geometry.hpp"

namespace gground {

using Rgb = std::array<std::uint8_t, 3>;

inline constexpr Rgb kWhite{255, 255, 255};

/// 8-bit RGB image, row-major, tightly packed.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, Rgb fill = kWhite) : width_(width), height_(height) {
    if (width < 0 || height < 0) throw Error(Errc::InvalidArgument, "negative raster size");
    data_.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < data_.size(); i += 3) {
      data_[i] = fill[0];
      data_[i + 1] = fill[1];
      data_[i + 2] = fill[2];
    }
  }
  Raster(int width, int height, std::vector<std::uint8_t> rgb)
      : width_(width), height_(height), data_(std::move(rgb)) {
    if (data_.size() != static_cast<std::size_t>(width) * height * 3) {
      throw Error(Errc::DimensionMismatch, "pixel buffer does not match raster size");
    }
  }

  [[nodiscard]] int width() const { return width_; }
  [[nodiscard]] int height() const { return height_; }
  [[nodiscard]] PixelDims dims() const { return {width_, height_}; }
  [[nodiscard]] bool empty() const { return width_ == 0 || height_ == 0; }
  [[nodiscard]] std::span<const std::uint8_t> bytes() const { return data_; }
  [[nodiscard]] std::span<std::uint8_t> bytes() { return data_; }

  [[nodiscard]] Rgb at(int x, int y) const {
    const std::size_t i = offset(x, y);
    return {data_[i], data_[i + 1], data_[i + 2]};
  }
  void set(int x, int y, Rgb c) {
    const std::size_t i = offset(x, y);
    data_[i] = c[0];
    data_[i + 1] = c[1];
    data_[i + 2] = c[2];
  }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  [[nodiscard]] std::size_t offset(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

/// Integer pixel rectangle, half-open: [x0, x1) × [y0, y1).
struct PixelRect {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;

  [[nodiscard]] int width() const { return x1 - x0; }
  [[nodiscard]] int height() const { return y1 - y0; }
  friend bool operator==(const PixelRect&, const PixelRect&) = default;
};

/// Smallest pixel rectangle covering a normalized box.
inline PixelRect to_pixel_rect(const NormBox& b, PixelDims d) {
  PixelRect r{static_cast<int>(std::floor(b.x1 * d.w + 1e-9)),
              static_cast<int>(std::floor(b.y1 * d.h + 1e-9)),
              static_cast<int>(std::ceil(b.x2 * d.w - 1e-9)),
              static_cast<int>(std::ceil(b.y2 * d.h - 1e-9))};
  r.x0 = std::clamp(r.x0, 0, d.w);
  r.y0 = std::clamp(r.y0, 0, d.h);
  r.x1 = std::clamp(r.x1, r.x0, d.w);
  r.y1 = std::clamp(r.y1, r.y0, d.h);
  return r;
}

inline Raster crop(const Raster& src, const PixelRect& r) {
  if (r.x0 < 0 || r.y0 < 0 || r.x1 > src.width() || r.y1 > src.height() || r.x1 < r.x0 ||
      r.y1 < r.y0) {
    throw Error(Errc::InvalidArgument, "crop window outside the image");
  }
  Raster out(r.width(), r.height());
  for (int y = 0; y < r.height(); ++y) {
    for (int x = 0; x < r.width(); ++x) out.set(x, y, src.at(r.x0 + x, r.y0 + y));
  }
  return out;
}

/// Copies `src` onto `dst` with its top-left corner at (x, y); clipped.
inline void paste(Raster& dst, const Raster& src, int x, int y) {
  for (int sy = 0; sy < src.height(); ++sy) {
    const int dy = y + sy;
    if (dy < 0 || dy >= dst.height()) continue;
    for (int sx = 0; sx < src.width(); ++sx) {
      const int dx = x + sx;
      if (dx < 0 || dx >= dst.width()) continue;
      dst.set(dx, dy, src.at(sx, sy));
    }
  }
}

/// Bilinear resampling with pixel-center alignment and edge clamping.
inline Raster resize_bilinear(const Raster& src, int width, int height) {
  if (width < 1 || height < 1 || src.empty()) {
    throw Error(Errc::InvalidArgument, "resize to an empty raster");
  }
  if (width == src.width() && height == src.height()) return src;
  Raster out(width, height);
  const double sx = static_cast<double>(src.width()) / width;
  const double sy = static_cast<double>(src.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width() - 1);
      const double wx = fx - x0;
      const Rgb a = src.at(x0, y0), b = src.at(x1, y0), c = src.at(x0, y1), d = src.at(x1, y1);
      Rgb px;
      for (int k = 0; k < 3; ++k) {
        const double top = a[k] + (b[k] - a[k]) * wx;
        const double bot = c[k] + (d[k] - c[k]) * wx;
        px[k] = static_cast<std::uint8_t>(std::clamp(std::lround(top + (bot - top) * wy), 0L, 255L));
      }
      out.set(x, y, px);
    }
  }
  return out;
}

inline void fill_rect(Raster& img, const PixelRect& r, Rgb c) {
  for (int y = std::max(0, r.y0); y < std::min(img.height(), r.y1); ++y) {
    for (int x = std::max(0, r.x0); x < std::min(img.width(), r.x1); ++x) img.set(x, y, c);
  }
}

/// Draws a rectangle outline of the given thickness inside `r`.
inline void stroke_rect(Raster& img, const PixelRect& r, Rgb c, int thickness = 2) {
  fill_rect(img, {r.x0, r.y0, r.x1, std::min(r.y1, r.y0 + thickness)}, c);
  fill_rect(img, {r.x0, std::max(r.y0, r.y1 - thickness), r.x1, r.y1}, c);
  fill_rect(img, {r.x0, r.y0, std::min(r.x1, r.x0 + thickness), r.y1}, c);
  fill_rect(img, {std::max(r.x0, r.x1 - thickness), r.y0, r.x1, r.y1}, c);
}

/// BT.601 luma of a region, one byte per pixel.
inline std::vector<std::uint8_t> grayscale(const Raster& img, const PixelRect& r) {
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(std::max(0, r.width())) * std::max(0, r.height()));
  for (int y = r.y0; y < r.y1; ++y) {
    for (int x = r.x0; x < r.x1; ++x) {
      const Rgb p = img.at(x, y);
      out.push_back(static_cast<std::uint8_t>(
          std::lround(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])));
    }
  }
  return out;
}

}  // namespace gground
