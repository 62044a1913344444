#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <variant>

#include "gground/error.hpp"

namespace gground {

/// A point in normalized [0,1] image coordinates.
struct NormPoint {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const NormPoint&, const NormPoint&) = default;
};

/// An axis-aligned box in normalized [0,1] image coordinates, top-left to
/// bottom-right.
struct NormBox {
  double x1 = 0.0;
  double y1 = 0.0;
  double x2 = 0.0;
  double y2 = 0.0;

  [[nodiscard]] double width() const { return x2 - x1; }
  [[nodiscard]] double height() const { return y2 - y1; }
  [[nodiscard]] double area() const { return width() * height(); }

  friend bool operator==(const NormBox&, const NormBox&) = default;
};

struct PixelDims {
  int w = 0;
  int h = 0;

  friend bool operator==(const PixelDims&, const PixelDims&) = default;
};

enum class CoordFormat { Point, XYXY, XYWH, MidWH };

using Geometry = std::variant<NormPoint, NormBox>;

inline bool in_unit(double v) { return v >= 0.0 && v <= 1.0; }

inline bool is_valid(const NormPoint& p) { return in_unit(p.x) && in_unit(p.y); }

inline bool is_valid(const NormBox& b) {
  return in_unit(b.x1) && in_unit(b.y1) && in_unit(b.x2) && in_unit(b.y2) && b.x1 <= b.x2 &&
         b.y1 <= b.y2;
}

inline bool is_valid(const PixelDims& d) { return d.w >= 1 && d.h >= 1; }

inline NormBox make_box(double x1, double y1, double x2, double y2) {
  NormBox b{x1, y1, x2, y2};
  if (!is_valid(b)) {
    throw Error(Errc::InvalidGeometry, "box outside [0,1] or inverted");
  }
  return b;
}

/// Converts a pixel-space box to normalized coordinates.
inline NormBox normalize_box(double px1, double py1, double px2, double py2, PixelDims dims) {
  return make_box(px1 / dims.w, py1 / dims.h, px2 / dims.w, py2 / dims.h);
}

inline std::string_view to_string(CoordFormat f) {
  switch (f) {
    case CoordFormat::Point: return "point";
    case CoordFormat::XYXY: return "xyxy";
    case CoordFormat::XYWH: return "xywh";
    case CoordFormat::MidWH: return "midwh";
  }
  return "?";
}

inline CoordFormat coord_format_from_string(std::string_view s) {
  if (s == "point") return CoordFormat::Point;
  if (s == "xyxy") return CoordFormat::XYXY;
  if (s == "xywh") return CoordFormat::XYWH;
  if (s == "midwh") return CoordFormat::MidWH;
  throw Error(Errc::InvalidArgument, "unknown coordinate format '" + std::string(s) + "'");
}

/// ×1000 quantization, half away from zero.
inline long quantize(double ratio) { return std::lround(ratio * 1000.0); }

inline NormPoint box_center(const NormBox& b) {
  return {(b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0};
}

namespace detail {

inline std::string join4(const char* open, long a, long b, long c, long d, const char* close) {
  std::string out = open;
  out += std::to_string(a) + ", " + std::to_string(b) + ", " + std::to_string(c) + ", " +
         std::to_string(d);
  out += close;
  return out;
}

}  // namespace detail

inline std::string encode(const NormPoint& p) {
  return "<point>" + std::to_string(quantize(p.x)) + ", " + std::to_string(quantize(p.y)) +
         "</point>";
}

/// Encodes a box in one of the three box layouts. `CoordFormat::Point` emits
/// the box center as a point.
inline std::string encode(const NormBox& b, CoordFormat fmt) {
  switch (fmt) {
    case CoordFormat::Point:
      return encode(box_center(b));
    case CoordFormat::XYXY:
      return detail::join4("<box>", quantize(b.x1), quantize(b.y1), quantize(b.x2),
                           quantize(b.y2), "</box>");
    case CoordFormat::XYWH:
      return detail::join4("<box>", quantize(b.x1), quantize(b.y1), quantize(b.width()),
                           quantize(b.height()), "</box>");
    case CoordFormat::MidWH: {
      const NormPoint c = box_center(b);
      return detail::join4("<box>", quantize(c.x), quantize(c.y), quantize(b.width()),
                           quantize(b.height()), "</box>");
    }
  }
  return {};
}

inline std::string encode(const Geometry& g, CoordFormat fmt) {
  if (const auto* p = std::get_if<NormPoint>(&g)) {
    if (fmt != CoordFormat::Point) {
      throw Error(Errc::InvalidArgument, "a point can only be encoded in point format");
    }
    return encode(*p);
  }
  return encode(std::get<NormBox>(g), fmt);
}

namespace detail {

// Grammar: open INT ("," " "* INT){n-1} close, INT = "-"? DIGIT+. Nothing else is accepted.
template <std::size_t N>
std::array<long, N> parse_ints(std::string_view text, std::string_view open,
                               std::string_view close) {
  if (text.size() < open.size() + close.size() || text.substr(0, open.size()) != open ||
      text.substr(text.size() - close.size()) != close) {
    throw Error(Errc::MalformedOutput, "expected " + std::string(open) + "..." +
                                           std::string(close) + " in '" + std::string(text) + "'");
  }
  std::string_view body = text.substr(open.size(), text.size() - open.size() - close.size());
  std::array<long, N> out{};
  std::size_t pos = 0;
  for (std::size_t i = 0; i < N; ++i) {
    if (i > 0) {
      if (pos >= body.size() || body[pos] != ',') {
        throw Error(Errc::MalformedOutput, "expected ',' in '" + std::string(text) + "'");
      }
      ++pos;
      while (pos < body.size() && body[pos] == ' ') ++pos;
    }
    const bool negative = pos < body.size() && body[pos] == '-';
    if (negative) ++pos;
    std::size_t start = pos;
    while (pos < body.size() && body[pos] >= '0' && body[pos] <= '9') ++pos;
    if (pos == start) {
      throw Error(Errc::MalformedOutput, "expected an integer in '" + std::string(text) + "'");
    }
    if (pos - start > 9) {
      throw Error(Errc::OutOfRange, "integer too large in '" + std::string(text) + "'");
    }
    long v = 0;
    std::from_chars(body.data() + start, body.data() + pos, v);
    out[i] = negative ? -v : v;
  }
  if (pos != body.size()) {
    throw Error(Errc::MalformedOutput, "unexpected trailing text in '" + std::string(text) + "'");
  }
  for (long v : out) {
    if (v < 0 || v > 1000) {
      throw Error(Errc::OutOfRange,
                  "coordinate " + std::to_string(v) + " outside [0,1000] in '" + std::string(text) + "'");
    }
  }
  return out;
}

}  // namespace detail

inline NormPoint parse_point(std::string_view text) {
  auto v = detail::parse_ints<2>(text, "<point>", "</point>");
  return {v[0] / 1000.0, v[1] / 1000.0};
}

/// Parses a `<box>` in a box layout and reconstructs the corner form.
///
/// Width and height are quantized separately from the anchor, so XYWH and
/// MidWH encodings of boxes touching the frame may reconstruct up to one unit
/// (1/1000) outside it. Such overshoot is clamped back to the frame; anything
/// larger is OutOfRange.
inline NormBox parse_box(std::string_view text, CoordFormat fmt) {
  if (fmt == CoordFormat::Point) {
    throw Error(Errc::InvalidArgument, "parse_box needs a box layout");
  }
  auto v = detail::parse_ints<4>(text, "<box>", "</box>");
  // Corners in half-units (1/2000) so MidWH stays exact in integers.
  long x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  switch (fmt) {
    case CoordFormat::XYXY:
      x1 = 2 * v[0], y1 = 2 * v[1], x2 = 2 * v[2], y2 = 2 * v[3];
      break;
    case CoordFormat::XYWH:
      x1 = 2 * v[0], y1 = 2 * v[1], x2 = 2 * (v[0] + v[2]), y2 = 2 * (v[1] + v[3]);
      break;
    case CoordFormat::MidWH:
      x1 = 2 * v[0] - v[2], y1 = 2 * v[1] - v[3], x2 = 2 * v[0] + v[2], y2 = 2 * v[1] + v[3];
      break;
    case CoordFormat::Point:
      break;
  }
  if (x2 < x1 || y2 < y1) {
    throw Error(Errc::DegenerateBox, "reconstructed box is inverted: '" + std::string(text) + "'");
  }
  constexpr long kSlack = 2;  // one quantization unit
  for (long c : {x1, y1, x2, y2}) {
    if (c < -kSlack || c > 2000 + kSlack) {
      throw Error(Errc::OutOfRange, "reconstructed box leaves the frame: '" + std::string(text) + "'");
    }
  }
  auto unit = [](long half) { return std::clamp(half, 0L, 2000L) / 2000.0; };
  return {unit(x1), unit(y1), unit(x2), unit(y2)};
}

inline Geometry parse(std::string_view text, CoordFormat fmt) {
  if (fmt == CoordFormat::Point) return parse_point(text);
  return parse_box(text, fmt);
}

/// Boundary-inclusive membership of a click in the ground-truth box.
inline bool click_hit(const NormPoint& p, const NormBox& gt) {
  return gt.x1 <= p.x && p.x <= gt.x2 && gt.y1 <= p.y && p.y <= gt.y2;
}

inline NormBox intersection(const NormBox& a, const NormBox& b) {
  NormBox r{std::max(a.x1, b.x1), std::max(a.y1, b.y1), std::min(a.x2, b.x2),
            std::min(a.y2, b.y2)};
  if (r.x2 < r.x1 || r.y2 < r.y1) return {r.x1, r.y1, r.x1, r.y1};
  return r;
}

inline double iou(const NormBox& a, const NormBox& b) {
  const double inter = intersection(a, b).area();
  const double uni = a.area() + b.area() - inter;
  if (uni <= 0.0) return a == b ? 1.0 : 0.0;
  return std::clamp(inter / uni, 0.0, 1.0);
}

/// True iff `outer` covers `inner` (coordinate containment within `eps`).
inline bool contains(const NormBox& outer, const NormBox& inner, double eps = 1e-9) {
  return outer.x1 <= inner.x1 + eps && outer.y1 <= inner.y1 + eps && inner.x2 <= outer.x2 + eps &&
         inner.y2 <= outer.y2 + eps;
}

}  // namespace gground
