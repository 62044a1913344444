#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "gground/error.hpp"
#include "gground/geometry.hpp"
#include "gground/raster.hpp"
#include "gground/records.hpp"
#include "gground/rng.hpp"

namespace gground {

struct FilterConfig {
  std::size_t domain_cap = 50;
  double containment_iou = 0.9;
  double empty_std = 2.0;
  double text_aspect = 10.0;
};

// ---- domain cap -------------------------------------------------------------

struct Page {
  std::string url;
  std::string domain;
};

/// Keeps at most `cfg.domain_cap` pages per domain, uniformly at random.
/// Each domain draws from its own stream, so the result does not depend on how
/// domains are interleaved in the input. Kept pages retain input order.
inline std::vector<std::string> domain_cap_sample(const std::vector<Page>& pages,
                                                  const FilterConfig& cfg, std::uint64_t seed) {
  std::map<std::string, std::vector<std::size_t>> by_domain;
  for (std::size_t i = 0; i < pages.size(); ++i) by_domain[pages[i].domain].push_back(i);

  std::vector<bool> keep(pages.size(), false);
  for (const auto& [domain, idx] : by_domain) {
    if (idx.size() <= cfg.domain_cap) {
      for (auto i : idx) keep[i] = true;
      continue;
    }
    RngStream rng(seed, "domain-cap:" + domain);
    for (auto k : rng.sample_indices(idx.size(), cfg.domain_cap)) keep[idx[k]] = true;
  }
  std::vector<std::string> out;
  for (std::size_t i = 0; i < pages.size(); ++i) {
    if (keep[i]) out.push_back(pages[i].url);
  }
  return out;
}

// ---- render planning --------------------------------------------------------

enum class ResolutionClass { P1080, P2K5, P4K };

inline std::int64_t screen_area(ResolutionClass c) {
  switch (c) {
    case ResolutionClass::P1080: return 1920LL * 1080;
    case ResolutionClass::P2K5: return 2560LL * 1440;
    case ResolutionClass::P4K: return 3840LL * 2160;
  }
  return 0;
}

inline std::string_view to_string(ResolutionClass c) {
  switch (c) {
    case ResolutionClass::P1080: return "1080p";
    case ResolutionClass::P2K5: return "2.5k";
    case ResolutionClass::P4K: return "4k";
  }
  return "?";
}

inline ResolutionClass resolution_class_from_string(std::string_view s) {
  if (s == "1080p") return ResolutionClass::P1080;
  if (s == "2.5k" || s == "2k") return ResolutionClass::P2K5;
  if (s == "4k") return ResolutionClass::P4K;
  throw Error(Errc::InvalidArgument, "unknown resolution class '" + std::string(s) + "'");
}

struct RenderPlan {
  ResolutionClass resolution = ResolutionClass::P1080;
  std::int64_t space = 0;
  int aspect_index = 0;
  int aspect_steps = 0;
  double rw = 1.0;
  double rh = 1.0;
  std::int64_t scale = 0;
  int width = 0;
  int height = 0;
};

/// Render size for aspect (rw, rh) = (1 + i/N, 2 - i/N):
/// s = ceil(sqrt(space / (rw*rh))), (width, height) = (round(rw*s), round(rh*s)).
/// Evaluated in exact integer arithmetic.
inline RenderPlan plan_render(ResolutionClass cls, int aspect_index, int aspect_steps) {
  if (aspect_steps < 1 || aspect_index < 0 || aspect_index > aspect_steps) {
    throw Error(Errc::InvalidArgument, "aspect index must be in [0, N] with N >= 1");
  }
  const std::int64_t n = aspect_steps;
  const std::int64_t i = aspect_index;
  const std::int64_t space = screen_area(cls);
  const std::int64_t wn = n + i;      // rw * N
  const std::int64_t hn = 2 * n - i;  // rh * N
  // Smallest s with s^2 * wn * hn >= space * n^2.
  const std::int64_t num = space * n * n;
  const std::int64_t den = wn * hn;
  auto s = static_cast<std::int64_t>(std::sqrt(static_cast<double>(num) / den));
  while (s * s * den < num) ++s;
  while (s > 0 && (s - 1) * (s - 1) * den >= num) --s;

  RenderPlan p;
  p.resolution = cls;
  p.space = space;
  p.aspect_index = aspect_index;
  p.aspect_steps = aspect_steps;
  p.rw = static_cast<double>(wn) / n;
  p.rh = static_cast<double>(hn) / n;
  p.scale = s;
  // round-half-up of (wn * s / n)
  p.width = static_cast<int>((2 * wn * s + n) / (2 * n));
  p.height = static_cast<int>((2 * hn * s + n) / (2 * n));
  return p;
}

inline RenderPlan plan_render_random(RngStream& rng, int aspect_steps) {
  static constexpr std::array kClasses{ResolutionClass::P1080, ResolutionClass::P2K5,
                                       ResolutionClass::P4K};
  const auto cls = kClasses[static_cast<std::size_t>(rng.uniform_int(0, 2))];
  const int i = static_cast<int>(rng.uniform_int(0, aspect_steps));
  return plan_render(cls, i, aspect_steps);
}

// ---- render-time retention ----------------------------------------------------

namespace detail {

inline std::vector<std::string> split_ws(std::string_view s) {
  std::vector<std::string> out;
  std::istringstream in{std::string(s)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

template <std::size_t N>
bool one_of(std::string_view v, const std::array<std::string_view, N>& set) {
  return std::find(set.begin(), set.end(), v) != set.end();
}

}  // namespace detail

inline constexpr std::array<std::string_view, 6> kInteractiveTags{"button", "input", "textarea",
                                                                  "select", "a",     "form"};
inline constexpr std::array<std::string_view, 6> kEventAttributes{
    "onclick", "onmousedown", "onmouseup", "onmouseover", "onmouseout", "onkeydown"};
inline constexpr std::array<std::string_view, 9> kInteractiveRoles{
    "button", "link", "textbox", "menuitem", "option", "checkbox", "radio", "tab", "switch"};
inline constexpr std::array<std::string_view, 7> kInteractiveClasses{
    "btn", "button", "input", "link", "nav", "menu", "item"};
inline constexpr std::array<std::string_view, 3> kIconTags{"i", "span", "svg"};
inline constexpr std::array<std::string_view, 6> kIconClasses{"fa",  "fas", "far",
                                                              "fal", "fab", "material-icons"};

/// Name of the first retention rule the element satisfies, if any.
/// Class attributes are matched token-wise (`class="btn btn-lg"` matches "btn").
inline std::optional<std::string_view> retention_rule(const ElementRecord& e) {
  const std::string tag = detail::lower(e.html_tag);
  if (detail::one_of(tag, kInteractiveTags)) return "interactive_tag";
  for (auto ev : kEventAttributes) {
    if (e.attributes.count(std::string(ev))) return "event_attribute";
  }
  if (auto it = e.attributes.find("role"); it != e.attributes.end()) {
    if (detail::one_of(detail::lower(it->second), kInteractiveRoles)) return "role_attribute";
  }
  std::vector<std::string> classes;
  if (auto it = e.attributes.find("class"); it != e.attributes.end()) {
    classes = detail::split_ws(it->second);
  }
  for (const auto& c : classes) {
    if (detail::one_of(c, kInteractiveClasses)) return "interactive_class";
  }
  if (detail::one_of(tag, kIconTags)) {
    for (const auto& c : classes) {
      if (detail::one_of(c, kIconClasses)) return "is_icon";
    }
  }
  if (tag == "img") return "is_image";
  return std::nullopt;
}

inline bool retain_element(const ElementRecord& e) { return retention_rule(e).has_value(); }

// ---- offline filters ----------------------------------------------------------

struct Removal {
  std::size_t index;
  std::string rule;
};

struct DedupResult {
  std::vector<std::size_t> kept;
  std::vector<Removal> removed;
};

/// Box de-duplication in two passes.
///
/// 1. "outer_container": a box that strictly contains two or more other boxes
///    is removed (counted over the full input).
/// 2. "nested_duplicate": among survivors, for each pair (i < j) in input order
///    where one box contains the other and their IoU exceeds
///    `cfg.containment_iou`, the larger box is removed (the later index on
///    equal area).
inline DedupResult dedup_boxes(std::span<const NormBox> boxes, const FilterConfig& cfg) {
  const std::size_t n = boxes.size();
  std::vector<bool> alive(n, true);
  DedupResult out;

  for (std::size_t a = 0; a < n; ++a) {
    int inner = 0;
    for (std::size_t b = 0; b < n && inner < 2; ++b) {
      if (a != b && !(boxes[a] == boxes[b]) && contains(boxes[a], boxes[b])) ++inner;
    }
    if (inner >= 2) {
      alive[a] = false;
      out.removed.push_back({a, "outer_container"});
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n && alive[i]; ++j) {
      if (!alive[j]) continue;
      const bool nested = contains(boxes[i], boxes[j]) || contains(boxes[j], boxes[i]);
      if (!nested || !(iou(boxes[i], boxes[j]) > cfg.containment_iou)) continue;
      const std::size_t larger = boxes[i].area() > boxes[j].area() ? i : j;
      alive[larger] = false;
      out.removed.push_back({larger, "nested_duplicate"});
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (alive[i]) out.kept.push_back(i);
  }
  std::sort(out.removed.begin(), out.removed.end(),
            [](const Removal& x, const Removal& y) { return x.index < y.index; });
  return out;
}

inline double population_std(std::span<const std::uint8_t> px) {
  if (px.empty()) throw Error(Errc::EmptyInput, "standard deviation of an empty region");
  double mean = 0.0;
  for (auto v : px) mean += v;
  mean /= static_cast<double>(px.size());
  double var = 0.0;
  for (auto v : px) var += (v - mean) * (v - mean);
  return std::sqrt(var / static_cast<double>(px.size()));
}

/// Solid-color test on grayscale pixels: population std below the threshold.
inline bool is_empty_region(std::span<const std::uint8_t> gray, const FilterConfig& cfg) {
  return population_std(gray) < cfg.empty_std;
}

/// Flags long sentence-like boxes: pixel width / pixel height > threshold.
inline bool is_content_text(const NormBox& box, PixelDims dims, const FilterConfig& cfg) {
  const double pw = box.width() * dims.w;
  const double ph = box.height() * dims.h;
  if (!(ph > 0.0)) throw Error(Errc::DegenerateBox, "box has zero pixel height");
  return pw / ph > cfg.text_aspect;
}

// ---- spatial re-sampling -------------------------------------------------------

struct GridSamplerConfig {
  int n = 50;
  int m = 50;
  double psi = 0.5;

  void validate() const {
    if (n < 1 || m < 1) throw Error(Errc::InvalidConfig, "grid dimensions must be >= 1");
    if (!(psi >= 0.0 && psi <= 1.0)) throw Error(Errc::InvalidConfig, "psi must be in [0,1]");
  }
};

struct ResampleResult {
  std::vector<std::size_t> kept;
  std::size_t keep_number = 0;
  std::vector<std::size_t> cell_counts;  // row-major over (ix, iy): ix * m + iy
};

inline std::size_t grid_cell(const NormPoint& p, int n, int m) {
  const int ix = std::clamp(static_cast<int>(std::floor(p.x * n)), 0, n - 1);
  const int iy = std::clamp(static_cast<int>(std::floor(p.y * m)), 0, m - 1);
  return static_cast<std::size_t>(ix) * m + iy;
}

/// Caps each grid cell at a quantile of the sorted cell-count distribution.
///
/// keep_number = sorted_counts[min(floor(n*m*psi), n*m - 1)], empty cells
/// included. Cells are visited in (ix, iy) order and each draws its subset from
/// `rng` in that order. Returns kept indices in ascending order.
inline ResampleResult grid_resample(std::span<const NormPoint> centers,
                                    const GridSamplerConfig& cfg, RngStream& rng) {
  cfg.validate();
  const std::size_t cells = static_cast<std::size_t>(cfg.n) * cfg.m;
  std::vector<std::vector<std::size_t>> buckets(cells);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    if (!is_valid(centers[i])) throw Error(Errc::InvalidGeometry, "center outside [0,1]");
    buckets[grid_cell(centers[i], cfg.n, cfg.m)].push_back(i);
  }

  ResampleResult out;
  out.cell_counts.reserve(cells);
  for (const auto& b : buckets) out.cell_counts.push_back(b.size());
  std::vector<std::size_t> dist = out.cell_counts;
  std::sort(dist.begin(), dist.end());
  const auto q = static_cast<std::size_t>(std::floor(static_cast<double>(cells) * cfg.psi));
  out.keep_number = dist[std::min(q, cells - 1)];

  for (const auto& bucket : buckets) {
    if (bucket.empty()) continue;
    for (auto k : rng.sample_indices(bucket.size(), out.keep_number)) out.kept.push_back(bucket[k]);
  }
  std::sort(out.kept.begin(), out.kept.end());
  return out;
}

/// Chi-square statistic of per-cell counts against a uniform spread over the
/// occupied cells. Zero when all occupied cells hold the same count.
inline double chi_square_uniformity(std::span<const NormPoint> centers, int n, int m) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(n) * m, 0);
  for (const auto& p : centers) ++counts[grid_cell(p, n, m)];
  std::size_t occupied = 0;
  for (auto c : counts) occupied += c > 0;
  if (occupied == 0) return 0.0;
  const double expected = static_cast<double>(centers.size()) / occupied;
  double chi = 0.0;
  for (auto c : counts) {
    if (c > 0) chi += (c - expected) * (c - expected) / expected;
  }
  return chi;
}

// ---- element selection -----------------------------------------------------------

/// Picks one element per screen: uniformly among icons when any exist,
/// otherwise uniformly among all elements. Returns the element index.
inline std::size_t select_element(const ScreenRecord& screen, RngStream& rng) {
  if (screen.elements.empty()) {
    throw Error(Errc::NoElements, "screen '" + screen.screen_id + "' has no elements");
  }
  std::vector<std::size_t> icons;
  for (std::size_t i = 0; i < screen.elements.size(); ++i) {
    if (screen.elements[i].kind == ElementKind::InteractiveIcon) icons.push_back(i);
  }
  if (!icons.empty()) {
    return icons[static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(icons.size()) - 1))];
  }
  return static_cast<std::size_t>(rng.uniform_int(0, static_cast<long>(screen.elements.size()) - 1));
}

// ---- layout graphs -----------------------------------------------------------------

/// Type colors for layout-graph rasters.
struct LayoutPalette {
  Rgb background{255, 255, 255};
  Rgb interactive_text{255, 0, 0};
  Rgb interactive_icon{0, 0, 255};
  Rgb image{0, 255, 255};
  Rgb other{128, 128, 128};

  [[nodiscard]] Rgb color(ElementKind k) const {
    switch (k) {
      case ElementKind::InteractiveText: return interactive_text;
      case ElementKind::InteractiveIcon: return interactive_icon;
      case ElementKind::Image: return image;
      case ElementKind::Other: return other;
    }
    return other;
  }
};

/// Paints each element's box in its type color, in element order.
inline Raster render_layout_graph(const ScreenRecord& screen, const LayoutPalette& palette = {}) {
  Raster out(screen.dims.w, screen.dims.h, palette.background);
  for (const auto& e : screen.elements) {
    fill_rect(out, to_pixel_rect(e.box, screen.dims), palette.color(e.kind));
  }
  return out;
}

}  // namespace gground
