// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any fail.

#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "gground/augment.hpp"
#include "gground/checksum.hpp"
#include "gground/curation.hpp"
#include "gground/evalharness.hpp"
#include "gground/losslab.hpp"
#include "gground/posttrain.hpp"
#include "gground/refgen.hpp"
#include "gground/review.hpp"
#include "gground/stages.hpp"
#include "support.hpp"

using namespace gground;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failed = 0;

// A check body returns an empty string on success or a failure reason.
using Body = std::function<std::string()>;

void criterion(const std::string& name, const Body& body) {
  std::string why;
  const auto t0 = Clock::now();
  try {
    why = body();
  } catch (const std::exception& e) {
    why = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  std::ostringstream line;
  line << (why.empty() ? "PASS " : "FAIL ") << name << " (" << std::fixed << std::setprecision(2) << secs
       << " s)";
  if (!why.empty()) {
    line << ": " << why;
    ++g_failed;
  }
  std::cout << line.str() << std::endl;
}

std::string within(double secs, Clock::time_point t0) {
  const double took = std::chrono::duration<double>(Clock::now() - t0).count();
  if (took < secs) return "";
  return "took " + std::to_string(took) + " s, limit " + std::to_string(secs) + " s";
}

NormBox random_box(std::mt19937_64& g) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double a = u(g), b = u(g), c = u(g), d = u(g);
  return {std::min(a, b), std::min(c, d), std::max(a, b), std::max(c, d)};
}

struct StubDraws {
  std::deque<double> u;
  std::deque<long> ints;
  double uniform() {
    const double v = u.front();
    u.pop_front();
    return v;
  }
  long uniform_int(long, long) {
    const long v = ints.front();
    ints.pop_front();
    return v;
  }
};

// ---- random crop -----------------------------------------------------------

struct CropOracle {
  bool applied;
  double cx1, cy1, cx2, cy2;
  NormBox box;
};

// Straight-line crop: gate, x factor, y factor, then box relative to the crop.
CropOracle crop_oracle(int w, int h, NormBox b, double p, double min_crop, RngStream& rng) {
  CropOracle o{};
  if (!(rng.uniform() < p)) {
    o.applied = false;
    o.cx1 = 0;
    o.cy1 = 0;
    o.cx2 = w;
    o.cy2 = h;
    o.box = b;
    return o;
  }
  o.applied = true;
  const double x_left = b.x1, x_right = 1.0 - b.x2;
  const double fx = min_crop + rng.uniform() * (1 - min_crop);
  o.cx1 = w * x_left * (1 - fx);
  o.cx2 = w * (b.x2 + x_right * fx);
  const double y_top = b.y1, y_bottom = 1.0 - b.y2;
  const double fy = min_crop + rng.uniform() * (1 - min_crop);
  o.cy1 = h * y_top * (1 - fy);
  o.cy2 = h * (b.y2 + y_bottom * fy);
  const double cw = o.cx2 - o.cx1, ch = o.cy2 - o.cy1;
  o.box = {(w * b.x1 - o.cx1) / cw, (h * b.y1 - o.cy1) / ch, (w * b.x2 - o.cx1) / cw, (h * b.y2 - o.cy1) / ch};
  return o;
}

std::string check_crop() {
  const auto t0 = Clock::now();
  std::mt19937_64 g(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int applied = 0;
  for (int n = 0; n < 1000; ++n) {
    const int w = 16 + int(u(g) * 600), h = 16 + int(u(g) * 400);
    const NormBox box = random_box(g);
    AugConfig cfg;
    cfg.random_crop = u(g);
    cfg.min_crop = 0.05 + 0.95 * u(g);
    RngStream a(n, "crop-oracle"), b(n, "crop-oracle");
    const auto got = random_crop(Raster(w, h), box, cfg, a);
    const auto want = crop_oracle(w, h, box, cfg.random_crop, cfg.min_crop, b);
    const auto& t = *got.trace.crop;
    const std::string at = "instance " + std::to_string(n);
    if (t.applied != want.applied) return at + ": gate differs";
    applied += want.applied;
    const double tr[] = {t.raw_x1, t.raw_y1, t.raw_x2, t.raw_y2, got.box.x1, got.box.y1, got.box.x2, got.box.y2};
    const double ex[] = {want.cx1, want.cy1, want.cx2, want.cy2, want.box.x1, want.box.y1, want.box.x2, want.box.y2};
    for (int k = 0; k < 8; ++k) {
      if (std::abs(tr[k] - ex[k]) > 1e-9) return at + ": coordinate " + std::to_string(k) + " differs";
    }
    // The kept pixels contain the whole target and the output matches them.
    if (t.window.x0 > w * box.x1 + 1e-9 || t.window.x1 < w * box.x2 - 1e-9 ||
        t.window.y0 > h * box.y1 + 1e-9 || t.window.y1 < h * box.y2 - 1e-9) {
      return at + ": crop window cuts into the box";
    }
    if (got.image.width() != t.window.width() || got.image.height() != t.window.height()) {
      return at + ": image size does not match the window";
    }
    if (!is_valid(got.box)) return at + ": output box invalid";
  }
  if (applied < 100) return "too few applied crops to be meaningful";
  return within(10, t0);
}

// ---- random resize and pad -------------------------------------------------

struct ResizeOracle {
  double scale;
  int pw, ph, px, py;
  NormBox box;
};

ResizeOracle resize_oracle(int w, int h, int W, int H, NormBox b, double p, int max_screen, RngStream& rng) {
  ResizeOracle o{};
  const double s_max = std::min({1.0, double(W) / w, double(H) / h});
  const double s_min = double(W) / max_screen * s_max;
  auto px_len = [](double len, int limit) {
    long v = std::lround(len);
    if (v < 1) v = 1;
    if (v > limit) v = limit;
    return int(v);
  };
  if (rng.uniform() < p) {
    o.scale = s_min + rng.uniform() * (s_max - s_min);
    o.pw = px_len(w * o.scale, W);
    o.ph = px_len(h * o.scale, H);
    o.px = int(rng.uniform_int(0, W - o.pw));
    o.py = int(rng.uniform_int(0, H - o.ph));
  } else {
    o.scale = s_max;
    o.pw = px_len(w * o.scale, W);
    o.ph = px_len(h * o.scale, H);
    o.px = 0;
    o.py = 0;
  }
  o.box = {(b.x1 * o.pw + o.px) / W, (b.y1 * o.ph + o.py) / H, (b.x2 * o.pw + o.px) / W,
           (b.y2 * o.ph + o.py) / H};
  return o;
}

std::string check_resize() {
  const auto t0 = Clock::now();
  std::mt19937_64 g(202);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n = 0; n < 1000; ++n) {
    const int w = 8 + int(u(g) * 800), h = 8 + int(u(g) * 800);
    const int W = 16 + int(u(g) * 300), H = 16 + int(u(g) * 300);
    const NormBox box = random_box(g);
    AugConfig cfg;
    cfg.random_resize = u(g);
    cfg.max_screen_size = W + int(u(g) * 4000);
    RngStream a(n, "resize-oracle"), b(n, "resize-oracle");
    const auto got = random_resize_pad(Raster(w, h), box, {W, H}, cfg, a);
    const auto want = resize_oracle(w, h, W, H, box, cfg.random_resize, cfg.max_screen_size, b);
    const auto& t = *got.trace.resize;
    const std::string at = "instance " + std::to_string(n);
    if (std::abs(t.scale - want.scale) > 1e-9) return at + ": scale differs";
    if (t.pasted.w != want.pw || t.pasted.h != want.ph || t.pos_x != want.px || t.pos_y != want.py) {
      return at + ": placement differs";
    }
    const double gb[] = {got.box.x1, got.box.y1, got.box.x2, got.box.y2};
    const double wb[] = {want.box.x1, want.box.y1, want.box.x2, want.box.y2};
    for (int k = 0; k < 4; ++k) {
      if (std::abs(gb[k] - wb[k]) > 1e-9) return at + ": box coordinate " + std::to_string(k) + " differs";
    }
    // The box lies inside the pasted image, which lies inside the canvas.
    if (got.image.width() != W || got.image.height() != H) return at + ": canvas size differs";
    const double eps = 1e-12;
    if (got.box.x1 < double(t.pos_x) / W - eps || got.box.x2 > double(t.pos_x + t.pasted.w) / W + eps ||
        got.box.y1 < double(t.pos_y) / H - eps || got.box.y2 > double(t.pos_y + t.pasted.h) / H + eps ||
        !is_valid(got.box)) {
      return at + ": box escapes the pasted image";
    }
  }
  // 4000x1000 onto 2000x1000, scale 0.3, pos (100,200).
  AugConfig cfg;
  const double s_max = 0.5, s_min = 2000.0 / cfg.max_screen_size * s_max;
  StubDraws d{{0.0, (0.3 - s_min) / (s_max - s_min)}, {100, 200}};
  const auto r = random_resize_pad(Raster(4000, 1000), {0.5, 0.5, 0.75, 0.8}, {2000, 1000}, cfg, d);
  if (!(r.box == NormBox{0.35, 0.35, 0.5, 0.44})) {
    std::ostringstream s;
    s << std::setprecision(17) << "worked example gave (" << r.box.x1 << "," << r.box.y1 << "," << r.box.x2
      << "," << r.box.y2 << ")";
    return s.str();
  }
  return within(10, t0);
}

// ---- grid resampling -------------------------------------------------------

// Visits every cell, scanning all points for members, in ix-major order.
std::vector<std::size_t> brute_resample(const std::vector<NormPoint>& pts, int n, int m, double psi,
                                        RngStream& rng, std::size_t* keep_out) {
  std::vector<std::vector<std::size_t>> cells;
  std::vector<std::size_t> counts;
  for (int ix = 0; ix < n; ++ix) {
    for (int iy = 0; iy < m; ++iy) {
      std::vector<std::size_t> members;
      for (std::size_t k = 0; k < pts.size(); ++k) {
        const int cx = std::min(n - 1, int(pts[k].x * n));
        const int cy = std::min(m - 1, int(pts[k].y * m));
        if (cx == ix && cy == iy) members.push_back(k);
      }
      counts.push_back(members.size());
      cells.push_back(std::move(members));
    }
  }
  std::sort(counts.begin(), counts.end());
  const std::size_t idx = std::min<std::size_t>(std::size_t(n * m * psi), counts.size() - 1);
  *keep_out = counts[idx];
  std::vector<std::size_t> out;
  for (const auto& members : cells) {
    if (members.empty()) continue;
    for (auto j : rng.sample_indices(members.size(), *keep_out)) out.push_back(members[j]);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string check_resample() {
  const auto t0 = Clock::now();
  std::mt19937_64 g(303);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::size_t cases = 0;
  for (int n = 1; n <= 4; ++n) {
    for (int m = 1; m <= 4; ++m) {
      for (int seed = 0; seed < 50; ++seed) {
        const int count = int(u(g) * 101);
        std::vector<NormPoint> pts;
        for (int k = 0; k < count; ++k) pts.push_back({u(g) * u(g), u(g)});
        const double psi = u(g);
        RngStream a(seed, "grid-oracle"), b(seed, "grid-oracle");
        std::size_t keep = 0;
        const auto want = brute_resample(pts, n, m, psi, b, &keep);
        const auto got = grid_resample(pts, {n, m, psi}, a);
        if (got.kept != want || got.keep_number != keep) {
          return "mismatch at n=" + std::to_string(n) + " m=" + std::to_string(m) + " seed=" + std::to_string(seed);
        }
        ++cases;
      }
    }
  }
  if (cases != 800) return "ran " + std::to_string(cases) + " cases";

  std::vector<NormPoint> toy;
  const int counts[2][2] = {{5, 3}, {2, 8}};
  for (int ix = 0; ix < 2; ++ix)
    for (int iy = 0; iy < 2; ++iy)
      for (int k = 0; k < counts[ix][iy]; ++k) toy.push_back({0.25 + 0.5 * ix, 0.25 + 0.5 * iy});
  RngStream tr(1, "toy");
  const auto toy_r = grid_resample(toy, {2, 2, 0.5}, tr);
  if (toy_r.kept.size() != 15) return "toy instance kept " + std::to_string(toy_r.kept.size());

  std::vector<NormPoint> heavy;
  for (int k = 0; k < 5000; ++k) heavy.push_back({std::pow(u(g), 3.0), u(g)});
  RngStream cr(2, "chi");
  const auto r = grid_resample(heavy, {10, 10, 0.5}, cr);
  std::vector<NormPoint> after;
  for (auto k : r.kept) after.push_back(heavy[k]);
  const double before_chi = chi_square_uniformity(heavy, 10, 10);
  const double after_chi = chi_square_uniformity(after, 10, 10);
  if (!(after_chi < before_chi)) {
    return "chi-square " + std::to_string(before_chi) + " -> " + std::to_string(after_chi);
  }
  return within(30, t0);
}

// ---- label smoothing and reweighting ---------------------------------------

std::string check_smoothing() {
  struct Row {
    double psi;
    DigitDistance d;
    double labels[10];
  };
  // Target digit 5.
  const Row table[] = {
      {10, DigitDistance::Squared, {0, 0, 0.1, 0.6, 0.9, 1, 0.9, 0.6, 0.1, 0}},
      {30, DigitDistance::Squared,
       {5.0 / 30, 14.0 / 30, 21.0 / 30, 26.0 / 30, 29.0 / 30, 1, 29.0 / 30, 26.0 / 30, 21.0 / 30, 14.0 / 30}},
      {10, DigitDistance::Absolute, {0.5, 0.6, 0.7, 0.8, 0.9, 1, 0.9, 0.8, 0.7, 0.6}},
      {30, DigitDistance::Absolute,
       {25.0 / 30, 26.0 / 30, 27.0 / 30, 28.0 / 30, 29.0 / 30, 1, 29.0 / 30, 28.0 / 30, 27.0 / 30, 26.0 / 30}},
  };
  const auto vocab = VocabSpec::with_leading_digits(12);
  for (const auto& row : table) {
    const auto y = smoothed_labels(vocab, 5, {row.psi, row.d, true});
    for (int k = 0; k < 10; ++k) {
      if (std::abs(y[k] - row.labels[k]) > 1e-15) {
        return "psi=" + std::to_string(row.psi) + " digit " + std::to_string(k) + ": " + std::to_string(y[k]);
      }
    }
    if (y[10] != 0.0 || y[11] != 0.0) return "non-digit token received mass";
  }
  if (std::abs(smoothed_labels(vocab, 5, {30, DigitDistance::Absolute, true})[0] - 0.8333333333333334) > 1e-15) {
    return "label(0) at psi=30 absolute";
  }

  for (double psi : {0.5, 1.0, 2.0, 10.0, 30.0, 500.0}) {
    for (auto d : {DigitDistance::Squared, DigitDistance::Absolute}) {
      for (int t = 0; t < 10; ++t) {
        const auto y = smoothed_labels(vocab, std::size_t(t), {psi, d, true});
        const auto raw = smoothed_labels(vocab, std::size_t(t), {psi, d, false});
        for (int k = 0; k < 10; ++k) {
          // clamp
          if (y[k] < 0.0 || y[k] > 1.0) return "clamp violated";
          if (y[k] != std::max(0.0, raw[k])) return "clamped value differs from max(0, raw)";
          // symmetry
          const int mirror = 2 * t - k;
          if (mirror >= 0 && mirror <= 9 && y[k] != y[mirror]) return "symmetry violated";
          // monotone in distance
          for (int j = 0; j < 10; ++j) {
            if (std::abs(j - t) < std::abs(k - t) && y[j] < y[k]) return "monotonicity violated";
          }
        }
        if (y[t] != 1.0) return "target label is not 1";
      }
    }
  }
  for (auto d : {DigitDistance::Squared, DigitDistance::Absolute}) {
    const auto y = smoothed_labels(vocab, 2, {1e12, d, true});
    for (int k = 0; k < 10; ++k) {
      if (std::abs(y[k] - 1.0) > 1e-9) return "large-psi limit not uniform";
    }
  }
  return "";
}

std::string check_reweight() {
  const std::string text = "<box>123, 45, 6, 1000</box>";
  const auto places = annotate_digit_places(text);
  const double r10 = 1 / std::sqrt(10.0), l10 = 1 / std::log(10.0);
  struct Row {
    ReweightScheme s;
    double h, t, u;
  };
  const Row rows[] = {{ReweightScheme::uniform(), 1, 1, 1},
                      {ReweightScheme::decimal(), 1, 1.0 / 10, 1.0 / 100},
                      {ReweightScheme::sqrt10(), 1, r10, 1.0 / 10},
                      {ReweightScheme::ln10(), 1, l10, l10 * l10}};
  // Expected place of each digit in `text`, left to right.
  const char expect_places[] = "HTUTUUHHTU";
  for (const auto& row : rows) {
    const auto w = reweight_weights(places, row.s);
    std::size_t digit = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
      if (text[i] < '0' || text[i] > '9') {
        if (w[i] != 1.0) return "non-digit weight " + std::to_string(w[i]);
        continue;
      }
      const char p = expect_places[digit++];
      const double want = p == 'H' ? row.h : p == 'T' ? row.t : row.u;
      if (std::abs(w[i] - want) > 1e-15) return "weight at " + std::to_string(i) + " is " + std::to_string(w[i]);
    }
    if (digit != 10) return "digit count";
  }
  for (auto s : {ReweightScheme{2.0, 1.5, 1.0}, ReweightScheme{4.0, 2.0, 1.0}, ReweightScheme{1.0, 1.0, 1.0 + 1e-9}}) {
    try {
      reweight_weights(places, s);
      return "scheme with a weight above 1 accepted";
    } catch (const Error& e) {
      if (e.code() != Errc::InvalidScheme) return "wrong error kind";
    }
  }
  return "";
}

// ---- codec -----------------------------------------------------------------

std::string check_codec() {
  for (int i = 0; i <= 1000; ++i) {
    for (int j = 0; j <= 1000; ++j) {
      const NormPoint p{i / 1000.0, j / 1000.0};
      const auto text = encode(p);
      const auto back = parse_point(text);
      if (!(back == p) || encode(back) != text) return "point " + text;
    }
  }
  struct Fmt {
    CoordFormat f;
    double bound[4];  // per-coordinate quantization bound
  };
  const double e = 1e-12;
  const Fmt fmts[] = {{CoordFormat::XYXY, {0.0005, 0.0005, 0.0005, 0.0005}},
                      {CoordFormat::XYWH, {0.0005, 0.0005, 0.001, 0.001}},
                      {CoordFormat::MidWH, {0.00075, 0.00075, 0.00075, 0.00075}}};
  for (const auto& f : fmts) {
    std::mt19937_64 g(404);
    for (int n = 0; n < 10000; ++n) {
      const auto b = random_box(g);
      const auto text = encode(b, f.f);
      const auto back = parse_box(text, f.f);
      if (encode(back, f.f) != text) return "re-encode differs for " + text;
      const double d[4] = {back.x1 - b.x1, back.y1 - b.y1, back.x2 - b.x2, back.y2 - b.y2};
      for (int k = 0; k < 4; ++k) {
        if (std::abs(d[k]) > f.bound[k] + e) return "quantization bound exceeded for " + text;
      }
    }
  }
  return "";
}

// ---- metrics ---------------------------------------------------------------

BenchmarkRecord rec(const std::string& id, NormBox gt) {
  BenchmarkRecord r;
  r.record_id = id;
  r.dims = {1000, 1000};
  r.gt_box = gt;
  r.tags["suite"] = "custom";
  return r;
}

std::string check_metrics() {
  std::vector<BenchmarkRecord> records;
  std::vector<Prediction> preds;
  for (int i = 0; i < 200; ++i) {
    const auto id = "r" + std::to_string(i);
    records.push_back(rec(id, {0.4, 0.4, 0.6, 0.6}));
    preds.push_back({id, i < 151 ? "<point>500, 500</point>" : "<point>100, 900</point>", std::nullopt});
  }
  const double acc = score(records, preds).overall.accuracy();
  if (acc != 0.755) return "planted suite scored " + std::to_string(acc);

  std::mt19937_64 g(505);
  std::vector<BenchmarkRecord> box_records;
  std::vector<Prediction> box_preds;
  for (int i = 0; i < 10000; ++i) {
    const auto gt = random_box(g);
    auto pred = random_box(g);
    if (i % 3 == 0) pred = {gt.x1, gt.y1, std::min(1.0, gt.x2 + 0.02), gt.y2};
    const double v = iou(pred, gt);
    for (std::size_t a = 0; a < kIouThresholds.size(); ++a)
      for (std::size_t b = a + 1; b < kIouThresholds.size(); ++b)
        if (v >= kIouThresholds[b] && !(v >= kIouThresholds[a])) return "pair-level threshold monotonicity";
    const auto id = "b" + std::to_string(i);
    box_records.push_back(rec(id, gt));
    box_preds.push_back({id, encode(pred, CoordFormat::XYXY), std::nullopt});
  }
  const auto rep = score(box_records, box_preds);
  for (std::size_t k = 1; k < kIouThresholds.size(); ++k) {
    if (*rep.overall.iou_rate(k) > *rep.overall.iou_rate(k - 1)) return "rate increases with threshold";
  }

  const auto ref = score({rec("a", {0, 0, 0.5, 0.5})}, {{"a", "<box>250, 250, 750, 750</box>", std::nullopt}});
  const double v = *ref.overall.iou_mean();
  std::ostringstream six;
  six << std::fixed << std::setprecision(6) << v;
  if (six.str() != "0.142857" || std::abs(v - 1.0 / 7.0) > 1e-9) return "reference IoU " + six.str();
  return "";
}

std::string check_flops_pareto() {
  const double f = flops_estimate(4.1e9, 2353).flops;
  if (f != 5.78838e13) return "flops " + std::to_string(f);
  const auto rows = pareto_table({{"4B-29C", 4.1e9, 4237, 0.55},
                                  {"4B-7C", 4.1e9, 1045, 0.50},
                                  {"4B-16C", 4.1e9, 2353, 0.58},
                                  {"tie-lower", 4.1e9, 2353, 0.40},
                                  {"big-bad", 7e9, 4161, 0.45}});
  const std::map<std::string, bool> want{
      {"4B-7C", true}, {"4B-16C", true}, {"tie-lower", false}, {"4B-29C", false}, {"big-bad", false}};
  for (const auto& r : rows) {
    if (want.at(r.name) != r.frontier) return "frontier flag for " + r.name;
  }
  return "";
}

// ---- render planning -------------------------------------------------------

std::string check_render() {
  const auto p = plan_render(ResolutionClass::P1080, 0, 10);
  if (p.width != 1019 || p.height != 2038) {
    return "1080p (1,2) gave " + std::to_string(p.width) + "x" + std::to_string(p.height);
  }
  std::string first;
  int violations = 0;
  for (auto c : {ResolutionClass::P1080, ResolutionClass::P2K5, ResolutionClass::P4K}) {
    for (int i = 0; i <= 10; ++i) {
      const auto r = plan_render(c, i, 10);
      const std::int64_t area = std::int64_t(r.width) * r.height;
      const bool ok = area >= r.space && area < r.space + r.width + r.height + 1;
      if (!ok) {
        ++violations;
        if (first.empty()) {
          first = std::string(to_string(c)) + " i=" + std::to_string(i) + " " + std::to_string(r.width) + "x" +
                  std::to_string(r.height) + " area " + std::to_string(area) + " vs space+w+h+1 " +
                  std::to_string(r.space + r.width + r.height + 1);
        }
      }
    }
  }
  if (violations) return std::to_string(violations) + "/33 plans break the slack bound, first " + first;
  return "";
}

// ---- triage ----------------------------------------------------------------

RolloutSet make_set(int hits, int misses) {
  nlohmann::json j = {{"sample_id", "s1"}, {"gt_box", {0.4, 0.4, 0.6, 0.6}}, {"prompt", "click save"}};
  j["rollouts"] = nlohmann::json::array();
  for (int i = 0; i < hits; ++i) j["rollouts"].push_back(encode(NormPoint{0.45 + 0.01 * i, 0.5}));
  for (int i = 0; i < misses; ++i) j["rollouts"].push_back(encode(NormPoint{0.1, 0.1 + 0.01 * i}));
  return rollout_set_from_json(j, CoordFormat::Point);
}

std::string check_triage() {
  const NormBox gt{0.4, 0.4, 0.6, 0.6};
  const auto r = triage(make_set(3, 5), {PairingKind::AllPairs, 0});
  if (r.pairs.size() != 15) return "mixed set gave " + std::to_string(r.pairs.size()) + " pairs";
  testsupport::TempDir dir("accept-triage");
  const auto m = export_round(dir.path(), r.pairs, {}, {1, 100}, 0);
  std::size_t lines = 0;
  std::set<std::pair<std::string, std::string>> distinct;
  std::string bad;
  for_each_jsonl(m.dir / "pairs.jsonl", [&](const nlohmann::json& j, std::size_t) {
    ++lines;
    const std::string chosen = j["chosen"], rejected = j["rejected"];
    distinct.insert({chosen, rejected});
    const auto c = click_of(chosen, CoordFormat::Point);
    const auto x = click_of(rejected, CoordFormat::Point);
    if (!c || !click_hit(*c, gt) || (x && click_hit(*x, gt))) bad = "pair fails re-verification";
  });
  if (!bad.empty()) return bad;
  if (lines != 15 || distinct.size() != 15) return "exported " + std::to_string(lines) + " lines";
  if (!triage(make_set(8, 0), {PairingKind::AllPairs, 0}).pairs.empty()) return "all-correct emitted pairs";
  if (!triage(make_set(0, 8), {PairingKind::AllPairs, 0}).pairs.empty()) return "all-incorrect emitted pairs";
  return "";
}

// ---- end-to-end smoke ------------------------------------------------------

fs::path run_pipeline(const fs::path& screens, const fs::path& out, unsigned workers) {
  const std::uint64_t seed = 2024;
  fs::create_directories(out);
  stages::filter_stage({screens, out / "filtered.jsonl", out / "filter_audit.jsonl", {}, FilterConfig{}, workers});
  stages::resample_stage({out / "filtered.jsonl", out / "resampled.jsonl", out / "resample_audit.jsonl", {},
                          GridSamplerConfig{4, 4, 0.5}, seed});
  stages::select_stage({out / "resampled.jsonl", out / "selected.jsonl", {}, seed, workers});
  stages::AugmentArgs a;
  a.input = out / "selected.jsonl";
  a.output = out / "train.jsonl";
  a.image_dir = out / "aug";
  a.seed = seed;
  a.workers = workers;
  a.canvas = {320, 240};
  stages::augment_stage(a);
  return out / "train.jsonl";
}

// Manifests record their own output paths, which differ per run directory.
std::map<std::string, std::string> tree_digest(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), dir).string();
    if (rel.ends_with(".manifest.json")) {
      auto j = nlohmann::json::parse(read_text_file(e.path()));
      for (const char* k : {"inputs", "outputs"})
        for (auto& f : j[k]) f.erase("path");
      out[rel] = sha256_hex(j.dump());
    } else {
      out[rel] = sha256_file(e.path());
    }
  }
  return out;
}

std::string check_smoke() {
  const auto t0 = Clock::now();
  testsupport::TempDir dir("accept-smoke");
  const auto screens = testsupport::write_synthetic_screens(dir / "in", 20);
  run_pipeline(screens, dir / "a", 1);
  run_pipeline(screens, dir / "b", 1);
  run_pipeline(screens, dir / "c", 8);
  const auto da = tree_digest(dir / "a");
  if (da != tree_digest(dir / "b")) return "two runs differ";
  if (da != tree_digest(dir / "c")) return "workers 1 and 8 differ";
  std::size_t train = 0;
  for_each_jsonl(dir / "a" / "train.jsonl", [&](const nlohmann::json&, std::size_t) { ++train; });
  if (train == 0) return "no training rows";
  std::size_t removals = 0;
  std::string bad;
  for (const char* audit : {"filter_audit.jsonl", "resample_audit.jsonl"}) {
    for_each_jsonl(dir / "a" / audit, [&](const nlohmann::json& j, std::size_t) {
      if (j.value("decision", "") != "remove") return;
      ++removals;
      if (!j.contains("rule") || !j["rule"].is_string() || j["rule"].get<std::string>().empty()) {
        bad = std::string("removal without a rule in ") + audit;
      }
    });
  }
  if (!bad.empty()) return bad;
  if (removals == 0) return "nothing was removed";
  return within(60, t0);
}

// ---- prompts ---------------------------------------------------------------

std::string check_prompts() {
  const char* long_gold_sha = "66e7d84acb0fd75849bf8e918abb9a1a86b246d622f49f06cade98e4f7565143";
  const char* long_sha = "f964a7cc929763845d6c39c4e84601e4cd930b9e76e9f8a24c1fb71c791009f1";
  const fs::path assets(GGROUND_ASSET_DIR);
  if (sha256_file(assets / "prompts" / "long_gold_v1.txt") != long_gold_sha) return "long-gold asset checksum";
  if (sha256_file(assets / "prompts" / "long_v1.txt") != long_sha) return "long asset checksum";
  if (sha256_hex(prompts::kLongGoldSystem) != long_gold_sha) return "embedded long-gold checksum";
  if (sha256_hex(prompts::kLongSystem) != long_sha) return "embedded long checksum";
  const auto b = parse_re_response(read_text_file(fs::path(GGROUND_FIXTURE_DIR) / "e1_response.txt"), true);
  if (b.area_type != "icon" || b.interactive != true) return "fixture parsed to " + b.area_type.value_or("(none)");
  return "";
}

// ---- review service --------------------------------------------------------

std::string check_review() {
  testsupport::TempDir dir("accept-review");
  const auto screens = testsupport::write_synthetic_screens(dir.path(), 1);
  const auto log = dir / "verdicts.jsonl";
  auto exported = [](httplib::Client& c) {
    std::size_t n = 0;
    const auto res = c.Get("/export");
    if (!res || res->status != 200) return std::size_t(0);
    std::istringstream in(res->body);
    std::string line;
    while (std::getline(in, line))
      if (!line.empty()) n += nlohmann::json::parse(line)["elements"].size();
    return n;
  };
  auto serve = [&](ReviewStore& store, const std::function<std::string(httplib::Client&)>& fn) {
    ReviewServer server(&store, {});
    if (!server.bind("127.0.0.1", 0)) return std::string("bind failed");
    std::thread t([&] { server.run(); });
    server.wait_until_ready();
    httplib::Client c("127.0.0.1", server.port());
    c.set_read_timeout(5, 0);
    std::string why;
    try {
      why = fn(c);
    } catch (const std::exception& e) {
      why = e.what();
    }
    server.stop();
    t.join();
    return why;
  };
  {
    ReviewStore store(screens, log);
    const auto why = serve(store, [&](httplib::Client& c) -> std::string {
      for (const char* eid : {"plain-div", "sentence", "nav"}) {
        const auto r = c.Post(std::string("/screens/screen-0/elements/") + eid + "/verdict",
                              R"({"decision":"remove"})", "application/json");
        if (!r || r->status != 200) return "verdict rejected";
      }
      const auto n = exported(c);
      return n == 7 ? "" : "export has " + std::to_string(n) + " elements";
    });
    if (!why.empty()) return why;
  }
  ReviewStore again(screens, log);
  return serve(again, [&](httplib::Client& c) -> std::string {
    const auto n = exported(c);
    return n == 7 ? "" : "after restart export has " + std::to_string(n) + " elements";
  });
}

}  // namespace

int main() {
  criterion("random crop oracle: 1000 instances, containment, < 10 s", check_crop);
  criterion("random resize oracle: 1000 instances, worked example, < 10 s", check_resize);
  criterion("grid resample oracle: n,m <= 4 x 50 seeds, toy keeps 15, chi-square drops, < 30 s", check_resample);
  criterion("label smoothing: hand table and properties", check_smoothing);
  criterion("loss reweighting: schemes exact, weights above 1 rejected", check_reweight);
  criterion("codec: 1001^2 points and 10000 boxes per format", check_codec);
  criterion("metrics: 0.755 suite, threshold monotonicity, IoU 1/7", check_metrics);
  criterion("flops 5.78838e13 and pareto fixtures", check_flops_pareto);
  criterion("render plan: 1019x2038 and slack bound for all classes at N=10", check_render);
  criterion("triage: 15 pairs re-verified, uniform sets emit none", check_triage);
  criterion("end-to-end smoke: 20 screens, deterministic, audited, < 60 s", check_smoke);
  criterion("prompt plumbing: checksums pinned, example response parses", check_prompts);
  criterion("review API: remove 3 of 10, export 7, survives restart", check_review);
  std::cout << (g_failed ? std::to_string(g_failed) + " criteria failed" : "all criteria passed") << std::endl;
  return g_failed ? 1 : 0;
}
