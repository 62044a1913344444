#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <optional>

#include <nlohmann/json.hpp>

#include "gground/error.hpp"
#include "gground/geometry.hpp"
#include "gground/raster.hpp"
#include "gground/rng.hpp"

namespace gground {

/// Anything that can supply the uniform draws the augmentations consume.
/// `RngStream` is the production source; tests script exact values.
template <typename S>
concept DrawSource = requires(S s, long lo, long hi) {
  { s.uniform() } -> std::convertible_to<double>;
  { s.uniform_int(lo, hi) } -> std::convertible_to<long>;
};

struct AugConfig {
  double random_crop = 0.3;
  double min_crop = 0.7;
  double random_resize = 1.0;
  int max_screen_size = 4096;
  Rgb pad_color = kWhite;

  void validate() const {
    if (!(random_crop >= 0.0 && random_crop <= 1.0) ||
        !(random_resize >= 0.0 && random_resize <= 1.0)) {
      throw Error(Errc::InvalidConfig, "augmentation probabilities must be in [0,1]");
    }
    if (!(min_crop > 0.0 && min_crop <= 1.0)) {
      throw Error(Errc::InvalidConfig, "min_crop must be in (0,1]");
    }
    if (max_screen_size < 1) throw Error(Errc::InvalidConfig, "max_screen_size must be >= 1");
  }
};

struct CropTrace {
  double gate_u = 0.0;
  bool applied = false;
  double factor_x = 1.0;
  double factor_y = 1.0;
  // Real-valued crop bounds before pixel snapping.
  double raw_x1 = 0.0, raw_y1 = 0.0, raw_x2 = 0.0, raw_y2 = 0.0;
  PixelRect window;
};

struct ResizeTrace {
  double gate_u = 0.0;
  bool applied = false;
  double s_min = 0.0;
  double s_max = 0.0;
  double scale = 1.0;
  PixelDims pasted;
  int pos_x = 0;
  int pos_y = 0;
  PixelDims canvas;
};

struct AugTrace {
  std::optional<CropTrace> crop;
  std::optional<ResizeTrace> resize;
};

struct AugResult {
  Raster image;
  NormBox box;
  AugTrace trace;
};

/// Crop window and updated box for given crop factors; no randomness.
///
/// The updated box is computed against the real-valued crop bounds, so a box
/// left of center stays left of center exactly. The pixel window rounds those
/// bounds to the nearest integer but never cuts into the box's pixel extent:
/// x0 <= w*box.x1 and x1 >= w*box.x2 (same vertically).
struct CropPlan {
  double raw_x1, raw_y1, raw_x2, raw_y2;
  PixelRect window;
  NormBox box;
};

inline CropPlan plan_crop(PixelDims dims, const NormBox& box, double factor_x, double factor_y) {
  const double w = dims.w, h = dims.h;
  CropPlan p{};
  p.raw_x1 = w * box.x1 * (1.0 - factor_x);
  p.raw_x2 = w * (box.x2 + (1.0 - box.x2) * factor_x);
  p.raw_y1 = h * box.y1 * (1.0 - factor_y);
  p.raw_y2 = h * (box.y2 + (1.0 - box.y2) * factor_y);

  auto lo = [](double raw, double edge) {
    return static_cast<int>(std::min(std::round(raw), std::floor(edge + 1e-9)));
  };
  auto hi = [](double raw, double edge) {
    return static_cast<int>(std::max(std::round(raw), std::ceil(edge - 1e-9)));
  };
  p.window.x0 = std::clamp(lo(p.raw_x1, w * box.x1), 0, dims.w);
  p.window.y0 = std::clamp(lo(p.raw_y1, h * box.y1), 0, dims.h);
  p.window.x1 = std::clamp(hi(p.raw_x2, w * box.x2), 0, dims.w);
  p.window.y1 = std::clamp(hi(p.raw_y2, h * box.y2), 0, dims.h);
  const double cw = p.raw_x2 - p.raw_x1, ch = p.raw_y2 - p.raw_y1;
  if (p.window.width() <= 0 || p.window.height() <= 0 || !(cw > 0.0) || !(ch > 0.0)) {
    throw Error(Errc::EmptyCrop, "crop window collapsed to zero pixels; check min_crop");
  }
  p.box = {std::clamp((w * box.x1 - p.raw_x1) / cw, 0.0, 1.0),
           std::clamp((h * box.y1 - p.raw_y1) / ch, 0.0, 1.0),
           std::clamp((w * box.x2 - p.raw_x1) / cw, 0.0, 1.0),
           std::clamp((h * box.y2 - p.raw_y1) / ch, 0.0, 1.0)};
  return p;
}

/// Proportional random crop that keeps the target box intact.
///
/// Draw order: gate, factor_x, factor_y. The same factor is used for both
/// sides of an axis, so an element left of center stays left of center.
template <DrawSource S>
AugResult random_crop(const Raster& image, const NormBox& box, const AugConfig& cfg, S& draws) {
  cfg.validate();
  if (!is_valid(box)) throw Error(Errc::InvalidGeometry, "random_crop: invalid box");
  if (image.empty()) throw Error(Errc::InvalidArgument, "random_crop: empty image");

  CropTrace t;
  t.gate_u = draws.uniform();
  t.window = {0, 0, image.width(), image.height()};
  t.raw_x2 = image.width();
  t.raw_y2 = image.height();
  if (!(t.gate_u < cfg.random_crop)) {
    return {image, box, {t, std::nullopt}};
  }
  t.applied = true;
  t.factor_x = cfg.min_crop + draws.uniform() * (1.0 - cfg.min_crop);
  t.factor_y = cfg.min_crop + draws.uniform() * (1.0 - cfg.min_crop);
  const CropPlan plan = plan_crop(image.dims(), box, t.factor_x, t.factor_y);
  t.raw_x1 = plan.raw_x1;
  t.raw_y1 = plan.raw_y1;
  t.raw_x2 = plan.raw_x2;
  t.raw_y2 = plan.raw_y2;
  t.window = plan.window;
  return {crop(image, plan.window), plan.box, {t, std::nullopt}};
}

namespace detail {

// Maps a normalized coordinate of the pasted image into canvas coordinates.
inline double to_canvas(double v, int pasted, int offset, int canvas) {
  if (pasted == canvas) return v + static_cast<double>(offset) / canvas;
  return (v * pasted + offset) / canvas;
}

}  // namespace detail

/// Shrinks the image onto a fixed-size canvas at a random scale and position.
///
/// Draw order: gate, scale, pos_x, pos_y. Without the gate the image is fitted
/// (never enlarged) and placed at the origin.
template <DrawSource S>
AugResult random_resize_pad(const Raster& image, const NormBox& box, PixelDims target,
                            const AugConfig& cfg, S& draws) {
  cfg.validate();
  if (!is_valid(box)) throw Error(Errc::InvalidGeometry, "random_resize_pad: invalid box");
  if (!is_valid(target)) throw Error(Errc::InvalidArgument, "random_resize_pad: empty target");
  if (image.empty()) throw Error(Errc::InvalidArgument, "random_resize_pad: empty image");
  if (cfg.max_screen_size < target.w) {
    throw Error(Errc::InvalidConfig, "max_screen_size " + std::to_string(cfg.max_screen_size) +
                                         " is smaller than the canvas width " +
                                         std::to_string(target.w));
  }

  const double w = image.width(), h = image.height();
  ResizeTrace t;
  t.canvas = target;
  t.s_max = std::min({1.0, target.w / w, target.h / h});
  t.s_min = static_cast<double>(target.w) / cfg.max_screen_size * t.s_max;
  t.gate_u = draws.uniform();

  auto scaled = [](double len, double scale, int limit) {
    return std::clamp(static_cast<int>(std::lround(len * scale)), 1, limit);
  };

  if (t.gate_u < cfg.random_resize) {
    t.applied = true;
    t.scale = t.s_min + draws.uniform() * (t.s_max - t.s_min);
    t.pasted = {scaled(w, t.scale, target.w), scaled(h, t.scale, target.h)};
    t.pos_x = static_cast<int>(draws.uniform_int(0, target.w - t.pasted.w));
    t.pos_y = static_cast<int>(draws.uniform_int(0, target.h - t.pasted.h));
  } else {
    t.scale = t.s_max;
    t.pasted = {scaled(w, t.scale, target.w), scaled(h, t.scale, target.h)};
  }

  Raster canvas(target.w, target.h, cfg.pad_color);
  paste(canvas, resize_bilinear(image, t.pasted.w, t.pasted.h), t.pos_x, t.pos_y);

  NormBox out{detail::to_canvas(box.x1, t.pasted.w, t.pos_x, target.w),
              detail::to_canvas(box.y1, t.pasted.h, t.pos_y, target.h),
              detail::to_canvas(box.x2, t.pasted.w, t.pos_x, target.w),
              detail::to_canvas(box.y2, t.pasted.h, t.pos_y, target.h)};
  out = {std::clamp(out.x1, 0.0, 1.0), std::clamp(out.y1, 0.0, 1.0),
         std::clamp(out.x2, 0.0, 1.0), std::clamp(out.y2, 0.0, 1.0)};
  return {std::move(canvas), out, {std::nullopt, t}};
}

inline nlohmann::json to_json(const AugTrace& trace) {
  nlohmann::json j = nlohmann::json::object();
  if (trace.crop) {
    const auto& c = *trace.crop;
    j["crop"] = {{"gate_u", c.gate_u},
                 {"applied", c.applied},
                 {"factor_x", c.factor_x},
                 {"factor_y", c.factor_y},
                 {"window", {c.window.x0, c.window.y0, c.window.x1, c.window.y1}}};
  }
  if (trace.resize) {
    const auto& r = *trace.resize;
    j["resize"] = {{"gate_u", r.gate_u},
                   {"applied", r.applied},
                   {"s_min", r.s_min},
                   {"s_max", r.s_max},
                   {"scale", r.scale},
                   {"pasted", {r.pasted.w, r.pasted.h}},
                   {"pos", {r.pos_x, r.pos_y}},
                   {"canvas", {r.canvas.w, r.canvas.h}}};
  }
  return j;
}

}  // namespace gground
