#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "gground/error.hpp"
#include "gground/geometry.hpp"
#include "gground/image_io.hpp"
#include "gground/records.hpp"

namespace gground {

struct BenchmarkRecord {
  std::string record_id;
  std::string image_ref;
  PixelDims dims;
  NormBox gt_box;
  std::string short_re;
  std::optional<std::string> long_re;
  std::map<std::string, std::string> tags;
};

enum class BenchmarkAdapter { Auto, Canonical, ScreenSpot, ScreenSpotPro };

inline BenchmarkAdapter benchmark_adapter_from_string(std::string_view s) {
  if (s == "auto") return BenchmarkAdapter::Auto;
  if (s == "canonical") return BenchmarkAdapter::Canonical;
  if (s == "screenspot") return BenchmarkAdapter::ScreenSpot;
  if (s == "screenspot_pro") return BenchmarkAdapter::ScreenSpotPro;
  throw Error(Errc::InvalidArgument, "unknown adapter '" + std::string(s) + "'");
}

struct LoadOptions {
  BenchmarkAdapter adapter = BenchmarkAdapter::Auto;
  bool require_images = false;  // MissingImage is fatal when set, a warning otherwise
  std::string default_suite = "custom";
};

struct LoadedBenchmark {
  std::vector<BenchmarkRecord> records;
  std::vector<std::string> warnings;
};

namespace detail {

inline NormBox pixel_box(double x1, double y1, double x2, double y2, PixelDims d) {
  if (x2 < x1 || y2 < y1) throw Error(Errc::SchemaError, "box has x2 < x1 or y2 < y1");
  NormBox b{x1 / d.w, y1 / d.h, x2 / d.w, y2 / d.h};
  if (!is_valid(b)) throw Error(Errc::SchemaError, "box leaves the image");
  return b;
}

inline NormBox checked_norm_box(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(Errc::SchemaError, "box must have 4 numbers");
  const double x1 = j[0].get<double>(), y1 = j[1].get<double>();
  const double x2 = j[2].get<double>(), y2 = j[3].get<double>();
  if (x2 < x1 || y2 < y1) throw Error(Errc::SchemaError, "box has x2 < x1 or y2 < y1");
  return box_from_json(j);
}

inline PixelDims dims_of(const nlohmann::json& j, const std::filesystem::path& image) {
  if (j.contains("dims")) return {j["dims"].at("w").get<int>(), j["dims"].at("h").get<int>()};
  if (j.contains("img_size")) return {j["img_size"].at(0).get<int>(), j["img_size"].at(1).get<int>()};
  if (std::filesystem::exists(image)) {
    const auto r = read_png(image);
    return {r.width(), r.height()};
  }
  throw Error(Errc::SchemaError, "record has no dims and its image cannot be read");
}

inline void put_tag(BenchmarkRecord& r, const nlohmann::json& j, const char* src, const char* key) {
  if (j.contains(src) && j[src].is_string()) r.tags[key] = j[src].get<std::string>();
}

inline BenchmarkAdapter detect_adapter(const nlohmann::json& j) {
  if (j.contains("gt_box") || j.contains("gt_box_px")) return BenchmarkAdapter::Canonical;
  if (j.contains("ui_type")) return BenchmarkAdapter::ScreenSpotPro;
  if (j.contains("data_type")) return BenchmarkAdapter::ScreenSpot;
  throw Error(Errc::SchemaError, "cannot detect record format");
}

}  // namespace detail

/// Converts one manifest line to the canonical record. Relative image paths are
/// resolved against `base`.
inline BenchmarkRecord benchmark_record_from_json(const nlohmann::json& j, BenchmarkAdapter adapter,
                                                  const std::filesystem::path& base,
                                                  const std::string& default_suite,
                                                  std::size_t lineno) {
  try {
    if (adapter == BenchmarkAdapter::Auto) adapter = detail::detect_adapter(j);
    BenchmarkRecord r;
    switch (adapter) {
      case BenchmarkAdapter::Canonical: {
        r.record_id = j.at("record_id").get<std::string>();
        r.image_ref = j.value("image", "");
        r.dims = detail::dims_of(j, base / r.image_ref);
        if (j.contains("gt_box")) {
          r.gt_box = detail::checked_norm_box(j["gt_box"]);
        } else {
          const auto& b = j.at("gt_box_px");
          r.gt_box = detail::pixel_box(b.at(0).get<double>(), b.at(1).get<double>(),
                                       b.at(2).get<double>(), b.at(3).get<double>(), r.dims);
        }
        r.short_re = j.value("short_re", "");
        if (j.contains("long_re") && j["long_re"].is_string()) r.long_re = j["long_re"].get<std::string>();
        const auto tags = j.value("tags", nlohmann::json::object());
        for (const auto& [k, v] : tags.items()) {
          r.tags[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
        break;
      }
      case BenchmarkAdapter::ScreenSpot: {
        // bbox is [x, y, w, h] in pixels.
        r.image_ref = j.at("img_filename").get<std::string>();
        r.record_id = j.value("id", r.image_ref + "#" + std::to_string(lineno));
        r.dims = detail::dims_of(j, base / r.image_ref);
        const auto& b = j.at("bbox");
        const double x = b.at(0).get<double>(), y = b.at(1).get<double>();
        r.gt_box = detail::pixel_box(x, y, x + b.at(2).get<double>(), y + b.at(3).get<double>(), r.dims);
        r.short_re = j.value("instruction", "");
        r.tags["suite"] = "screenspot";
        detail::put_tag(r, j, "data_type", "kind");
        detail::put_tag(r, j, "data_source", "platform");
        break;
      }
      case BenchmarkAdapter::ScreenSpotPro: {
        // bbox is [x1, y1, x2, y2] in pixels.
        r.image_ref = j.at("img_filename").get<std::string>();
        r.record_id = j.value("id", r.image_ref + "#" + std::to_string(lineno));
        r.dims = detail::dims_of(j, base / r.image_ref);
        const auto& b = j.at("bbox");
        r.gt_box = detail::pixel_box(b.at(0).get<double>(), b.at(1).get<double>(),
                                     b.at(2).get<double>(), b.at(3).get<double>(), r.dims);
        r.short_re = j.value("instruction", "");
        r.tags["suite"] = "sspro";
        detail::put_tag(r, j, "ui_type", "kind");
        detail::put_tag(r, j, "platform", "platform");
        detail::put_tag(r, j, "application", "app");
        detail::put_tag(r, j, "group", "group");
        break;
      }
      case BenchmarkAdapter::Auto: break;
    }
    if (!is_valid(r.dims)) throw Error(Errc::SchemaError, "dims must be positive");
    if (!r.tags.count("suite")) r.tags["suite"] = default_suite;
    if (r.tags["suite"].empty()) throw Error(Errc::SchemaError, "empty suite tag");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaError, e.what());
  }
}

inline LoadedBenchmark load_benchmark(const std::filesystem::path& manifest, const LoadOptions& opt = {}) {
  if (!std::filesystem::exists(manifest)) {
    throw Error(Errc::IoFailure, "manifest '" + manifest.string() + "' does not exist");
  }
  LoadedBenchmark out;
  const auto base = manifest.parent_path();
  std::unordered_map<std::string, std::size_t> seen;
  for_each_jsonl(manifest, [&](const nlohmann::json& j, std::size_t lineno) {
    auto r = benchmark_record_from_json(j, opt.adapter, base, opt.default_suite, lineno);
    if (!seen.emplace(r.record_id, lineno).second) {
      throw Error(Errc::SchemaError, "duplicate record_id '" + r.record_id + "'");
    }
    if (!r.image_ref.empty() && !std::filesystem::exists(base / r.image_ref)) {
      std::string msg = manifest.string() + ":" + std::to_string(lineno) + ": image '" + r.image_ref +
                        "' not found";
      if (opt.require_images) throw Error(Errc::MissingImage, msg);
      out.warnings.push_back(std::move(msg));
    }
    out.records.push_back(std::move(r));
  });
  return out;
}

// ---- scoring --------------------------------------------------------------

struct Prediction {
  std::string record_id;
  std::string raw_text;
  std::optional<double> latency_ms;
};

inline std::vector<Prediction> read_predictions(const std::filesystem::path& path) {
  std::vector<Prediction> out;
  for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) {
    try {
      Prediction p{j.at("record_id").get<std::string>(), j.at("raw_text").get<std::string>(), std::nullopt};
      if (j.contains("latency_ms") && j["latency_ms"].is_number()) p.latency_ms = j["latency_ms"].get<double>();
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::SchemaError, e.what());
    }
  });
  return out;
}

enum class ClickSource { PointDirect, BoxCenter };

inline ClickSource click_source_from_string(std::string_view s) {
  if (s == "point_direct") return ClickSource::PointDirect;
  if (s == "box_center") return ClickSource::BoxCenter;
  throw Error(Errc::InvalidArgument, "unknown click source '" + std::string(s) + "'");
}

inline constexpr std::array<double, 3> kIouThresholds{0.3, 0.5, 0.8};

struct SliceStats {
  std::size_t count = 0;
  std::size_t hits = 0;
  std::size_t parse_errors = 0;
  std::size_t missing = 0;  // records with no prediction, scored as misses
  std::size_t box_predictions = 0;
  double iou_sum = 0.0;
  std::array<std::size_t, 3> iou_at{0, 0, 0};
  double latency_sum = 0.0;
  std::size_t latency_count = 0;

  [[nodiscard]] double accuracy() const { return count ? double(hits) / double(count) : 0.0; }
  [[nodiscard]] double parse_error_rate() const { return count ? double(parse_errors) / double(count) : 0.0; }
  [[nodiscard]] std::optional<double> iou_mean() const {
    if (!box_predictions) return std::nullopt;
    return iou_sum / double(box_predictions);
  }
  [[nodiscard]] std::optional<double> iou_rate(std::size_t k) const {
    if (!box_predictions) return std::nullopt;
    return double(iou_at[k]) / double(box_predictions);
  }
};

struct SuiteReport {
  SliceStats total;
  std::map<std::string, std::map<std::string, SliceStats>> slices;  // key -> value -> stats
  std::map<std::string, double> macro;                             // key -> mean slice accuracy
};

struct EvalReport {
  std::map<std::string, SuiteReport> suites;
  SliceStats overall;
};

struct ScoreOptions {
  ClickSource click_source = ClickSource::BoxCenter;
  CoordFormat box_format = CoordFormat::XYXY;
  std::vector<std::string> slice_keys{"platform", "kind", "app"};
};

inline constexpr std::string_view kNoTag = "(none)";

namespace detail {

struct RecordOutcome {
  bool hit = false;
  bool parse_error = false;
  bool missing = false;
  std::optional<double> iou;
  std::optional<double> latency;
};

/// point_direct accepts only point outputs. box_center accepts box outputs
/// (clicked at their center, with IoU) and also plain points.
inline RecordOutcome score_one(const BenchmarkRecord& r, const Prediction* p, ClickSource src,
                               CoordFormat box_format) {
  RecordOutcome o;
  if (!p) {
    o.missing = true;
    return o;
  }
  o.latency = p->latency_ms;
  const std::string_view t = p->raw_text;
  try {
    if (src == ClickSource::BoxCenter && t.find("<box>") != std::string_view::npos) {
      const auto b = parse_box(t, box_format);
      o.hit = click_hit(box_center(b), r.gt_box);
      o.iou = iou(b, r.gt_box);
    } else {
      const auto pt = parse_point(t);
      o.hit = click_hit(pt, r.gt_box);
    }
  } catch (const Error&) {
    o.parse_error = true;
    o.hit = false;
  }
  return o;
}

inline void accumulate(SliceStats& s, const RecordOutcome& o) {
  ++s.count;
  s.hits += o.hit;
  s.parse_errors += o.parse_error;
  s.missing += o.missing;
  if (o.iou) {
    ++s.box_predictions;
    s.iou_sum += *o.iou;
    for (std::size_t k = 0; k < kIouThresholds.size(); ++k) s.iou_at[k] += *o.iou >= kIouThresholds[k];
  }
  if (o.latency) {
    s.latency_sum += *o.latency;
    ++s.latency_count;
  }
}

}  // namespace detail

/// Scores predictions against records. Records without a prediction count as
/// misses; predictions for unknown records are rejected.
inline EvalReport score(const std::vector<BenchmarkRecord>& records,
                        const std::vector<Prediction>& predictions, const ScoreOptions& opt = {}) {
  std::unordered_map<std::string, const BenchmarkRecord*> by_id;
  for (const auto& r : records) by_id[r.record_id] = &r;
  std::unordered_map<std::string, const Prediction*> pred;
  for (const auto& p : predictions) {
    if (!by_id.count(p.record_id)) throw Error(Errc::UnknownRecordId, "no record '" + p.record_id + "'");
    pred[p.record_id] = &p;  // the last prediction for an id wins
  }

  // Accumulate in record_id order so floating sums do not depend on input order.
  std::vector<const BenchmarkRecord*> ordered;
  ordered.reserve(records.size());
  for (const auto& r : records) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(),
            [](const BenchmarkRecord* a, const BenchmarkRecord* b) { return a->record_id < b->record_id; });

  EvalReport rep;
  for (const auto* rp : ordered) {
    const auto& r = *rp;
    const auto it = pred.find(r.record_id);
    const auto o = detail::score_one(r, it == pred.end() ? nullptr : it->second, opt.click_source,
                                      opt.box_format);
    auto& suite = rep.suites[r.tags.at("suite")];
    detail::accumulate(rep.overall, o);
    detail::accumulate(suite.total, o);
    for (const auto& key : opt.slice_keys) {
      const auto t = r.tags.find(key);
      detail::accumulate(suite.slices[key][t == r.tags.end() ? std::string(kNoTag) : t->second], o);
    }
  }
  for (auto& [name, suite] : rep.suites) {
    for (const auto& [key, values] : suite.slices) {
      double sum = 0.0;
      for (const auto& [v, s] : values) sum += s.accuracy();
      suite.macro[key] = sum / double(values.size());
    }
  }
  return rep;
}

/// Plain mean of the named slice accuracies within one suite.
inline double average_slices(const EvalReport& rep, const std::string& suite, const std::string& key,
                             const std::vector<std::string>& values) {
  if (values.empty()) throw Error(Errc::InvalidArgument, "no slice values to average");
  const auto s = rep.suites.find(suite);
  if (s == rep.suites.end()) throw Error(Errc::InvalidArgument, "unknown suite '" + suite + "'");
  const auto k = s->second.slices.find(key);
  if (k == s->second.slices.end()) throw Error(Errc::InvalidArgument, "unknown slice key '" + key + "'");
  double sum = 0.0;
  for (const auto& v : values) {
    const auto it = k->second.find(v);
    if (it == k->second.end()) throw Error(Errc::InvalidArgument, "unknown slice '" + key + "=" + v + "'");
    sum += it->second.accuracy();
  }
  return sum / double(values.size());
}

inline nlohmann::json to_json(const SliceStats& s) {
  auto opt = [](std::optional<double> v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  nlohmann::json j = {{"count", s.count},
                      {"hits", s.hits},
                      {"accuracy", s.accuracy()},
                      {"parse_errors", s.parse_errors},
                      {"parse_error_rate", s.parse_error_rate()},
                      {"missing_predictions", s.missing},
                      {"box_predictions", s.box_predictions},
                      {"iou_mean", opt(s.iou_mean())},
                      {"iou_at_0.3", opt(s.iou_rate(0))},
                      {"iou_at_0.5", opt(s.iou_rate(1))},
                      {"iou_at_0.8", opt(s.iou_rate(2))}};
  if (s.latency_count) j["latency_ms_mean"] = s.latency_sum / double(s.latency_count);
  return j;
}

inline nlohmann::json to_json(const EvalReport& rep) {
  nlohmann::json j = {{"schema_version", kSchemaVersion}, {"overall", to_json(rep.overall)}};
  j["suites"] = nlohmann::json::object();
  for (const auto& [name, s] : rep.suites) {
    nlohmann::json sj = {{"total", to_json(s.total)}, {"macro", s.macro}};
    sj["slices"] = nlohmann::json::object();
    for (const auto& [key, values] : s.slices) {
      for (const auto& [v, st] : values) sj["slices"][key][v] = to_json(st);
    }
    j["suites"][name] = std::move(sj);
  }
  return j;
}

namespace detail {
inline std::string csv_num(std::optional<double> v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline void csv_row(std::ostringstream& os, const std::string& suite, const std::string& slice,
                    const SliceStats& s) {
  os << csv_field(suite) << ',' << csv_field(slice) << ',' << s.count << ',' << s.hits << ','
     << csv_num(s.accuracy()) << ',' << csv_num(s.parse_error_rate()) << ',' << csv_num(s.iou_mean()) << ','
     << csv_num(s.iou_rate(0)) << ',' << csv_num(s.iou_rate(1)) << ',' << csv_num(s.iou_rate(2)) << '\n';
}
}  // namespace detail

inline std::string to_csv(const EvalReport& rep) {
  std::ostringstream os;
  os << "suite,slice,count,hits,accuracy,parse_error_rate,iou_mean,iou_at_0.3,iou_at_0.5,iou_at_0.8\n";
  for (const auto& [name, s] : rep.suites) {
    detail::csv_row(os, name, "all", s.total);
    for (const auto& [key, values] : s.slices) {
      for (const auto& [v, st] : values) detail::csv_row(os, name, key + "=" + v, st);
    }
  }
  detail::csv_row(os, "overall", "all", rep.overall);
  return os.str();
}

// ---- compute accounting ---------------------------------------------------

struct ComputeEstimate {
  double params = 0;
  double image_tokens = 0;
  double flops = 0;
};

/// Training-style compute estimate 6·N·D.
inline ComputeEstimate flops_estimate(double params, double image_tokens) {
  if (!(params > 0) || !(image_tokens > 0)) {
    throw Error(Errc::InvalidArgument, "params and image_tokens must be positive");
  }
  return {params, image_tokens, 6.0 * params * image_tokens};
}

struct ParetoEntry {
  std::string name;
  double params = 0;
  double image_tokens = 0;
  double score = 0;
};

struct ParetoRow {
  std::string name;
  double nd = 0;
  double flops = 0;
  double score = 0;
  bool frontier = false;
};

/// Rows ascending in N·D (ties by name). A row is on the frontier unless some
/// other row has both strictly lower N·D and strictly higher score.
inline std::vector<ParetoRow> pareto_table(const std::vector<ParetoEntry>& entries) {
  if (entries.empty()) throw Error(Errc::EmptyInput, "pareto_table: no entries");
  std::vector<ParetoRow> rows;
  for (const auto& e : entries) {
    const auto c = flops_estimate(e.params, e.image_tokens);
    rows.push_back({e.name, e.params * e.image_tokens, c.flops, e.score, true});
  }
  std::sort(rows.begin(), rows.end(), [](const ParetoRow& a, const ParetoRow& b) {
    return a.nd != b.nd ? a.nd < b.nd : a.name < b.name;
  });
  for (auto& r : rows) {
    r.frontier = std::none_of(rows.begin(), rows.end(),
                              [&](const ParetoRow& o) { return o.nd < r.nd && o.score > r.score; });
  }
  return rows;
}

inline std::string pareto_csv(const std::vector<ParetoRow>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "name,nd,flops,score,frontier\n";
  for (const auto& r : rows) {
    os << detail::csv_field(r.name) << ',' << r.nd << ',' << r.flops << ',' << r.score << ','
       << (r.frontier ? "true" : "false") << '\n';
  }
  return os.str();
}

}  // namespace gground
