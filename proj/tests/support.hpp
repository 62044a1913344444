#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "gground/image_io.hpp"
#include "gground/raster.hpp"
#include "gground/records.hpp"
#include "gground/rng.hpp"

namespace testsupport {

namespace fs = std::filesystem;

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::string tmpl = (fs::temp_directory_path() / ("gground-" + tag + "-XXXXXX")).string();
    if (!mkdtemp(tmpl.data())) throw std::runtime_error("mkdtemp failed");
    path_ = tmpl;
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  [[nodiscard]] const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

/// Horizontal stripes in `c` over `rect`, so the region is never uniform.
inline void striped(gground::Raster& img, const gground::PixelRect& r, gground::Rgb c) {
  for (int y = r.y0; y < r.y1; ++y) {
    const gground::Rgb row = (y - r.y0) % 2 ? c : gground::Rgb{0, 0, 0};
    gground::fill_rect(img, {r.x0, y, r.x1, y + 1}, row);
  }
}

inline gground::NormBox norm(const gground::PixelRect& r, gground::PixelDims d) {
  return {double(r.x0) / d.w, double(r.y0) / d.h, double(r.x1) / d.w, double(r.y1) / d.h};
}

/// Writes `count` synthetic screenshots plus screens.jsonl into `dir`.
///
/// Every screen carries one element for each filter outcome: kept button,
/// kept icon, no retention rule, empty region, content text, an outer
/// container holding two links, and a nested duplicate pair.
inline fs::path write_synthetic_screens(const fs::path& dir, int count, std::uint64_t seed = 7) {
  using namespace gground;
  fs::create_directories(dir / "img");
  JsonlWriter w(dir / "screens.jsonl");
  for (int k = 0; k < count; ++k) {
    RngStream rng(seed, "synthetic:" + std::to_string(k));
    const PixelDims d{320 + 16 * int(rng.uniform_int(0, 4)), 240 + 8 * int(rng.uniform_int(0, 4))};
    Raster img(d.w, d.h, kWhite);
    ScreenRecord s;
    s.screen_id = "screen-" + std::to_string(k);
    s.image = "img/" + s.screen_id + ".png";
    s.dims = d;
    s.domain = "site" + std::to_string(k % 5) + ".example";
    auto add = [&](const std::string& id, PixelRect r, ElementKind kind, const std::string& tag,
                   std::map<std::string, std::string> attrs, bool draw = true) {
      if (draw) striped(img, r, {Rgb{static_cast<std::uint8_t>(40 * (k % 5)), 120, 200}});
      ElementRecord e;
      e.element_id = id;
      e.box = norm(r, d);
      e.kind = kind;
      e.html_tag = tag;
      e.attributes = std::move(attrs);
      s.elements.push_back(std::move(e));
    };
    const int jx = int(rng.uniform_int(0, 20)), jy = int(rng.uniform_int(0, 20));
    add("button", {10 + jx, 10 + jy, 70 + jx, 40 + jy}, ElementKind::InteractiveText, "button", {});
    add("icon", {100 + jx, 12 + jy, 120 + jx, 32 + jy}, ElementKind::InteractiveIcon, "span", {{"class", "fas fa-home"}});
    add("plain-div", {150, 10 + jy, 200, 40 + jy}, ElementKind::Other, "div", {});
    add("blank-link", {220, 10, 260, 40}, ElementKind::InteractiveText, "a", {}, false);
    add("sentence", {10, 60 + jy, 290, 72 + jy}, ElementKind::InteractiveText, "a", {});
    add("nav", {10, 100, 200, 160}, ElementKind::Other, "div", {{"class", "nav"}}, false);
    add("nav-a", {20, 110, 80, 150}, ElementKind::InteractiveText, "a", {});
    add("nav-b", {100, 110, 180, 150}, ElementKind::InteractiveText, "a", {});
    add("dup-outer", {220, 100, 300, 140}, ElementKind::InteractiveText, "button", {});
    add("dup-inner", {221, 101, 299, 139}, ElementKind::InteractiveText, "button", {{"onclick", "go()"}});
    write_png(dir / s.image, img);
    w.write(to_json(s));
  }
  w.close();
  return dir / "screens.jsonl";
}

inline std::string run_capture(const std::string& cmd, int* status) {
  std::string out;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) throw std::runtime_error("popen failed");
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) out.append(buf, n);
  const int rc = pclose(p);
  *status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return out;
}

}  // namespace testsupport
