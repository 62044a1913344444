#pragma once

// Pipeline stages behind the command line tool. Each stage reads JSONL,
// writes JSONL, and leaves a run manifest next to its outputs.

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gground/augment.hpp"
#include "gground/checksum.hpp"
#include "gground/curation.hpp"
#include "gground/endpoint.hpp"
#include "gground/error.hpp"
#include "gground/evalharness.hpp"
#include "gground/image_io.hpp"
#include "gground/losslab.hpp"
#include "gground/parallel.hpp"
#include "gground/posttrain.hpp"
#include "gground/records.hpp"
#include "gground/refgen.hpp"
#include "gground/review.hpp"
#include "gground/rng.hpp"

namespace gground::stages {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- run manifests ----------------------------------------------------------

/// Accumulates the run manifest of one stage. Paths are recorded as given;
/// worker count is deliberately left out so manifests match across it.
class RunManifest {
 public:
  RunManifest(std::string stage, json config, std::optional<std::uint64_t> seed)
      : stage_(std::move(stage)), config_(std::move(config)), seed_(seed) {}

  void input(const fs::path& p) { inputs_.push_back({{"path", p.generic_string()}, {"sha256", sha256_file(p)}}); }
  void output(const fs::path& p) { outputs_.push_back({{"path", p.generic_string()}, {"sha256", sha256_file(p)}}); }
  void count(const std::string& key, std::size_t n) { counts_[key] = n; }
  void extra(const std::string& key, json v) { extra_[key] = std::move(v); }

  [[nodiscard]] json to_json() const {
    json j = {{"schema_version", kSchemaVersion},
              {"stage", stage_},
              {"config", config_},
              {"seed", seed_ ? json(*seed_) : json(nullptr)},
              {"inputs", inputs_},
              {"outputs", outputs_},
              {"counts", counts_}};
    for (const auto& [k, v] : extra_.items()) j[k] = v;
    return j;
  }

  void write(const fs::path& path) const { write_text_file(path, to_json().dump(2) + "\n"); }

 private:
  std::string stage_;
  json config_;
  std::optional<std::uint64_t> seed_;
  json inputs_ = json::array();
  json outputs_ = json::array();
  json counts_ = json::object();
  json extra_ = json::object();
};

inline fs::path default_manifest(const fs::path& output) { return fs::path(output.string() + ".manifest.json"); }

/// Image path stored in a record relative to `from_dir`, rewritten relative to `to_dir`.
inline std::string rebase(const std::string& image, const fs::path& from_dir, const fs::path& to_dir) {
  if (image.empty() || detail::is_uri(image) || fs::path(image).is_absolute()) return image;
  const auto abs = fs::absolute(from_dir / image).lexically_normal();
  return abs.lexically_relative(fs::absolute(to_dir).lexically_normal()).generic_string();
}

inline std::string relative_to(const fs::path& p, const fs::path& dir) {
  return fs::absolute(p).lexically_normal().lexically_relative(fs::absolute(dir).lexically_normal()).generic_string();
}

inline fs::path resolve(const std::string& image, const fs::path& dir) {
  const fs::path p(image);
  return p.is_absolute() ? p : dir / p;
}

inline fs::path dir_of(const fs::path& file) {
  return file.has_parent_path() ? file.parent_path() : fs::path(".");
}

// ---- cap-domains --------------------------------------------------------------

struct CapDomainsArgs {
  fs::path input, output, manifest;
  std::uint64_t seed = 0;
  std::size_t cap = 50;
};

inline json cap_domains(const CapDomainsArgs& a) {
  FilterConfig cfg;
  cfg.domain_cap = a.cap;
  if (a.cap < 1) throw Error(Errc::InvalidConfig, "cap must be >= 1");
  std::vector<Page> pages;
  std::vector<json> lines;
  for_each_jsonl(a.input, [&](const json& j, std::size_t) {
    try {
      pages.push_back({j.at("url").get<std::string>(), j.at("domain").get<std::string>()});
    } catch (const json::exception& e) {
      throw Error(Errc::SchemaError, e.what());
    }
    lines.push_back(j);
  });
  const auto kept_urls = domain_cap_sample(pages, cfg, a.seed);
  std::map<std::string, std::size_t> want;
  for (const auto& u : kept_urls) ++want[u];
  JsonlWriter w(a.output);
  for (std::size_t i = 0; i < pages.size(); ++i) {
    auto it = want.find(pages[i].url);
    if (it == want.end() || it->second == 0) continue;
    --it->second;
    w.write(lines[i]);
  }
  w.close();
  RunManifest m("cap-domains", {{"cap", a.cap}}, a.seed);
  m.input(a.input);
  m.output(a.output);
  m.count("pages_in", pages.size());
  m.count("pages_out", w.count());
  const auto j = m.to_json();
  m.write(a.manifest.empty() ? default_manifest(a.output) : a.manifest);
  return j;
}

// ---- plan-render --------------------------------------------------------------

struct PlanRenderArgs {
  fs::path input, output, manifest;
  std::uint64_t seed = 0;
  int aspect_steps = 10;
  std::optional<std::string> resolution;  // fixed class instead of a random one
};

inline json to_json(const RenderPlan& p) {
  return {{"resolution", to_string(p.resolution)}, {"space", p.space},   {"aspect_index", p.aspect_index},
          {"aspect_steps", p.aspect_steps},        {"rw", p.rw},         {"rh", p.rh},
          {"scale", p.scale},                      {"width", p.width},   {"height", p.height}};
}

inline json plan_render_stage(const PlanRenderArgs& a) {
  if (a.aspect_steps < 1) throw Error(Errc::InvalidConfig, "aspect_steps must be >= 1");
  std::optional<ResolutionClass> fixed;
  if (a.resolution) fixed = resolution_class_from_string(*a.resolution);
  JsonlWriter w(a.output);
  for_each_jsonl(a.input, [&](const json& j, std::size_t) {
    std::string url;
    try {
      url = j.at("url").get<std::string>();
    } catch (const json::exception& e) {
      throw Error(Errc::SchemaError, e.what());
    }
    RngStream rng(a.seed, "render:" + url);
    const auto plan = fixed ? plan_render(*fixed, static_cast<int>(rng.uniform_int(0, a.aspect_steps)),
                                          a.aspect_steps)
                            : plan_render_random(rng, a.aspect_steps);
    json out = to_json(plan);
    out["url"] = url;
    w.write(out);
  });
  w.close();
  RunManifest m("plan-render",
                {{"aspect_steps", a.aspect_steps}, {"resolution", a.resolution ? json(*a.resolution) : json("random")}},
                a.seed);
  m.input(a.input);
  m.output(a.output);
  m.count("plans", w.count());
  const auto j = m.to_json();
  m.write(a.manifest.empty() ? default_manifest(a.output) : a.manifest);
  return j;
}

// ---- filter -------------------------------------------------------------------

struct FilterArgs {
  fs::path input, output, audit, manifest;
  FilterConfig cfg;
  unsigned workers = 1;
};

struct ScreenFilterOutcome {
  ScreenRecord screen;
  std::vector<json> audit;
  std::size_t removed = 0;
};

/// Runs the filter chain on one screen: retention rules, box de-duplication,
/// then the empty-region and content-text pixel checks. Every element gets an
/// audit line naming the rule that kept or removed it.
inline ScreenFilterOutcome filter_screen(const ScreenRecord& s, const fs::path& image_dir,
                                         const FilterConfig& cfg) {
  ScreenFilterOutcome out;
  out.screen = s;
  out.screen.elements.clear();
  std::vector<std::optional<std::string>> removed_by(s.elements.size());
  std::vector<std::string> kept_by(s.elements.size());

  for (std::size_t i = 0; i < s.elements.size(); ++i) {
    if (auto r = retention_rule(s.elements[i])) {
      kept_by[i] = std::string(*r);
    } else {
      removed_by[i] = "no_retention_rule";
    }
  }

  std::vector<std::size_t> alive;
  std::vector<NormBox> boxes;
  for (std::size_t i = 0; i < s.elements.size(); ++i) {
    if (!removed_by[i]) {
      alive.push_back(i);
      boxes.push_back(s.elements[i].box);
    }
  }
  for (const auto& r : dedup_boxes(boxes, cfg).removed) removed_by[alive[r.index]] = r.rule;

  std::optional<Raster> image;
  for (std::size_t i = 0; i < s.elements.size(); ++i) {
    if (removed_by[i]) continue;
    const auto& e = s.elements[i];
    if (!image) {
      const auto path = resolve(s.image, image_dir);
      if (s.image.empty() || !fs::exists(path)) {
        throw Error(Errc::MissingImage, "screen '" + s.screen_id + "': image '" + s.image + "' not found");
      }
      image = read_png(path);
      if (image->width() != s.dims.w || image->height() != s.dims.h) {
        throw Error(Errc::DimensionMismatch, "screen '" + s.screen_id + "': image size differs from dims");
      }
    }
    const auto rect = to_pixel_rect(e.box, s.dims);
    if (rect.width() <= 0 || rect.height() <= 0 || is_empty_region(grayscale(*image, rect), cfg)) {
      removed_by[i] = "empty_region";
    } else if (e.kind != ElementKind::Image && is_content_text(e.box, s.dims, cfg)) {
      removed_by[i] = "content_text";
    }
  }

  for (std::size_t i = 0; i < s.elements.size(); ++i) {
    json a = {{"schema_version", kSchemaVersion},
              {"screen_id", s.screen_id},
              {"element_id", s.elements[i].element_id},
              {"decision", removed_by[i] ? "remove" : "keep"},
              {"rule", removed_by[i] ? *removed_by[i] : kept_by[i]}};
    out.audit.push_back(std::move(a));
    if (removed_by[i]) {
      ++out.removed;
    } else {
      out.screen.elements.push_back(s.elements[i]);
    }
  }
  return out;
}

inline json filter_stage(const FilterArgs& a) {
  const auto screens = read_screens(a.input);
  const auto in_dir = dir_of(a.input);
  const auto out_dir = dir_of(a.output);
  const auto results = parallel_map(screens.size(), a.workers,
                                    [&](std::size_t i) { return filter_screen(screens[i], in_dir, a.cfg); });
  JsonlWriter w(a.output);
  JsonlWriter audit(a.audit);
  std::size_t elements_in = 0, removed = 0;
  std::map<std::string, std::size_t> by_rule;
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto s = results[i].screen;
    s.image = rebase(s.image, in_dir, out_dir);
    w.write(to_json(s));
    for (const auto& line : results[i].audit) {
      audit.write(line);
      if (line["decision"] == "remove") ++by_rule[line["rule"].get<std::string>()];
    }
    elements_in += screens[i].elements.size();
    removed += results[i].removed;
  }
  w.close();
  audit.close();
  RunManifest m("filter",
                {{"containment_iou", a.cfg.containment_iou},
                 {"empty_std", a.cfg.empty_std},
                 {"text_aspect", a.cfg.text_aspect}},
                std::nullopt);
  m.input(a.input);
  m.output(a.output);
  m.output(a.audit);
  m.count("screens", screens.size());
  m.count("elements_in", elements_in);
  m.count("elements_removed", removed);
  m.count("elements_out", elements_in - removed);
  m.extra("removed_by_rule", by_rule);
  const auto j = m.to_json();
  m.write(a.manifest.empty() ? default_manifest(a.output) : a.manifest);
  return j;
}

// ---- resample -----------------------------------------------------------------

struct ResampleArgs {
  fs::path input, output, audit, manifest;
  GridSamplerConfig cfg;
  std::uint64_t seed = 0;
};

/// Grid re-sampling over the centers of every element of every screen.
/// Screens left without elements are dropped.
inline json resample_stage(const ResampleArgs& a) {
  auto screens = read_screens(a.input);
  const auto in_dir = dir_of(a.input);
  const auto out_dir = dir_of(a.output);
  std::vector<NormPoint> centers;
  std::vector<std::pair<std::size_t, std::size_t>> owner;
  for (std::size_t s = 0; s < screens.size(); ++s) {
    for (std::size_t e = 0; e < screens[s].elements.size(); ++e) {
      centers.push_back(box_center(screens[s].elements[e].box));
      owner.emplace_back(s, e);
    }
  }
  RngStream rng(a.seed, "resample");
  const auto res = grid_resample(centers, a.cfg, rng);
  std::vector<bool> keep(centers.size(), false);
  for (auto k : res.kept) keep[k] = true;

  std::optional<JsonlWriter> audit;
  if (!a.audit.empty()) audit.emplace(a.audit);
  std::vector<std::vector<ElementRecord>> kept(screens.size());
  for (std::size_t k = 0; k < centers.size(); ++k) {
    const auto [s, e] = owner[k];
    if (keep[k]) {
      kept[s].push_back(screens[s].elements[e]);
    } else if (audit) {
      audit->write({{"schema_version", kSchemaVersion},
                    {"screen_id", screens[s].screen_id},
                    {"element_id", screens[s].elements[e].element_id},
                    {"decision", "remove"},
                    {"rule", "grid_resample"}});
    }
  }
  JsonlWriter w(a.output);
  for (std::size_t s = 0; s < screens.size(); ++s) {
    if (kept[s].empty()) continue;
    screens[s].elements = std::move(kept[s]);
    screens[s].image = rebase(screens[s].image, in_dir, out_dir);
    w.write(to_json(screens[s]));
  }
  w.close();
  if (audit) audit->close();
  RunManifest m("resample", {{"n", a.cfg.n}, {"m", a.cfg.m}, {"psi", a.cfg.psi}}, a.seed);
  m.input(a.input);
  m.output(a.output);
  if (audit) m.output(a.audit);
  m.count("elements_in", centers.size());
  m.count("elements_out", res.kept.size());
  m.count("screens_out", w.count());
  m.extra("keep_number", res.keep_number);
  m.extra("chi_square_before", chi_square_uniformity(centers, a.cfg.n, a.cfg.m));
  std::vector<NormPoint> after;
  for (auto k : res.kept) after.push_back(centers[k]);
  m.extra("chi_square_after", after.empty() ? 0.0 : chi_square_uniformity(after, a.cfg.n, a.cfg.m));
  const auto j = m.to_json();
  m.write(a.manifest.empty() ? default_manifest(a.output) : a.manifest);
  return j;
}

// ---- select -------------------------------------------------------------------

struct SelectArgs {
  fs::path input, output, manifest;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

inline json select_stage(const SelectArgs& a) {
  const auto screens = read_screens(a.input);
  const auto in_dir = dir_of(a.input);
  const auto out_dir = dir_of(a.output);
  const auto picks = parallel_map(screens.size(), a.workers, [&](std::size_t i) -> std::optional<std::size_t> {
    if (screens[i].elements.empty()) return std::nullopt;
    RngStream rng(a.seed, "select:" + screens[i].screen_id);
    return select_element(screens[i], rng);
  });
  JsonlWriter w(a.output);
  std::size_t icons = 0;
  for (std::size_t i = 0; i < screens.size(); ++i) {
    if (!picks[i]) continue;
    const auto& s = screens[i];
    const auto& e = s.elements[*picks[i]];
    icons += e.kind == ElementKind::InteractiveIcon;
    w.write({{"schema_version", kSchemaVersion},
             {"sample_id", s.screen_id + ":" + e.element_id},
             {"screen_id", s.screen_id},
             {"image", rebase(s.image, in_dir, out_dir)},
             {"dims", {{"w", s.dims.w}, {"h", s.dims.h}}},
             {"element", to_json(e)}});
  }
  w.close();
  RunManifest m("select", json::object(), a.seed);
  m.input(a.input);
  m.output(a.output);
  m.count("screens", screens.size());
  m.count("selected", w.count());
  m.count("selected_icons", icons);
  const auto j = m.to_json();
  m.write(a.manifest.empty() ? default_manifest(a.output) : a.manifest);
  return j;
}

struct SelectedItem {
  std::string sample_id;
  std::string screen_id;
  std::string image;
  PixelDims dims;
  ElementRecord element;
};

inline SelectedItem selected_from_json(const json& j) {
  try {
    return {j.at("sample_id").get<std::string>(), j.at("screen_id").get<std::string>(),
            j.at("image").get<std::string>(),
            {j.at("dims").at("w").get<int>(), j.at("dims").at("h").get<int>()},
            element_from_json(j.at("element"))};
  } catch (const json::exception& e) {
    throw Error(Errc::SchemaError, e.what());
  }
}

inline std::vector<SelectedItem> read_selected(const fs::path& path) {
  std::vector<SelectedItem> out;
  for_each_jsonl(path, [&](const json& j, std::size_t) { out.push_back(selected_from_json(j)); });
  return out;
}

// ---- augment ------------------------------------------------------------------

struct AugmentArgs {
  fs::path input, output, image_dir, manifest;
  AugConfig cfg;
  PixelDims canvas{1280, 720};
  CoordFormat format = CoordFormat::Point;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  bool trace = true;
};

/// Crop then resize-and-pad each selected sample onto the canvas, writing one
/// PNG and one training line per sample.
inline json augment_stage(const AugmentArgs& a) {
  a.cfg.validate();
  if (!is_valid(a.canvas)) throw Error(Errc::InvalidConfig, "canvas must be positive");
  if (a.cfg.max_screen_size < a.canvas.w) {
    throw Error(Errc::InvalidConfig, "max_screen_size is smaller than the canvas width");
  }
  const auto items = read_selected(a.input);
  const auto in_dir = dir_of(a.input);
  const auto out_dir = dir_of(a.output);
  fs::create_directories(a.image_dir);

  const auto lines = parallel_map(items.size(), a.workers, [&](std::size_t i) {
    const auto& it = items[i];
    const auto path = resolve(it.image, in_dir);
    if (!fs::exists(path)) throw Error(Errc::MissingImage, "image '" + it.image + "' not found");
    const auto img = read_png(path);
    RngStream rng(a.seed, "augment:" + it.sample_id);
    auto cropped = random_crop(img, it.element.box, a.cfg, rng);
    auto placed = random_resize_pad(cropped.image, cropped.box, a.canvas, a.cfg, rng);
    placed.trace.crop = cropped.trace.crop;

    std::string name = it.sample_id;
    for (auto& c : name) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    }
    const auto png = a.image_dir / (name + ".png");
    write_png(png, placed.image);

    const Geometry target = a.format == CoordFormat::Point ? Geometry(box_center(placed.box)) : Geometry(placed.box);
    json j = {{"schema_version", kSchemaVersion},
              {"sample_id", it.sample_id},
              {"image", relative_to(png, out_dir)},
              {"dims", {{"w", a.canvas.w}, {"h", a.canvas.h}}},
              {"box", box_to_json(placed.box)},
              {"format", to_string(a.format)},
              {"target", encode(target, a.format)}};
    if (it.element.references) j["references"] = to_json(*it.element.references);
    if (a.trace) j["trace"] = to_json(placed.trace);
    return j;
  });

  JsonlWriter w(a.output);
  for (const auto& l : lines) w.write(l);
  w.close();
  RunManifest m("augment",
                {{"random_crop", a.cfg.random_crop},
                 {"min_crop", a.cfg.min_crop},
                 {"random_resize", a.cfg.random_resize},
                 {"max_screen_size", a.cfg.max_screen_size},
                 {"canvas", {{"w", a.canvas.w}, {"h", a.canvas.h}}},
                 {"format", to_string(a.format)}},
                a.seed);
  m.input(a.input);
  m.output(a.output);
  m.count("samples", w.count());
  const auto j = m.to_json();
  m.write(a.manifest.empty() ? default_manifest(a.output) : a.manifest);
  return j;
}

// ---- regen --------------------------------------------------------------------

struct RegenArgs {
  fs::path input, output, work_dir, manifest, rejects;
  std::optional<fs::path> responses;  // canned {sample_id, response} lines instead of the endpoint
  bool dry_run = false;               // write request bodies, no calls
  EndpointConfig endpoint;
  double rate_per_sec = 1.0;
  std::uint64_t seed = 0;
};

/// Builds the highlight-and-crop prompt for every selected sample and attaches
/// the parsed references. Unparseable responses go to the rejects file.
inline json regen_stage(const RegenArgs& a, const Sleeper& sleep = real_sleep) {
  const auto items = read_selected(a.input);
  const auto in_dir = dir_of(a.input);
  fs::create_directories(a.work_dir);
  std::map<std::string, std::string> canned;
  if (a.responses) {
    for_each_jsonl(*a.responses, [&](const json& j, std::size_t) {
      try {
        canned[j.at("sample_id").get<std::string>()] = j.at("response").get<std::string>();
      } catch (const json::exception& e) {
        throw Error(Errc::SchemaError, e.what());
      }
    });
  }
  TokenBucket bucket(a.rate_per_sec, 1.0);
  JsonlWriter w(a.output);
  const auto rejects_path = a.rejects.empty() ? fs::path(a.output.string() + ".rejects.jsonl") : a.rejects;
  JsonlWriter rej(rejects_path);
  std::size_t calls = 0;
  for (const auto& it : items) {
    const auto img = read_png(resolve(it.image, in_dir));
    auto hl = img;
    const auto rect = to_pixel_rect(it.element.box, it.dims);
    stroke_rect(hl, rect, {255, 0, 0}, 2);
    std::string name = it.sample_id;
    for (auto& c : name) {
      if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
    }
    const auto hl_path = a.work_dir / (name + "_highlight.png");
    const auto crop_path = a.work_dir / (name + "_crop.png");
    write_png(hl_path, hl);
    write_png(crop_path, crop(img, rect));
    const auto payload = build_longgold_prompt(hl_path.string(), crop_path.string());

    if (a.dry_run) {
      w.write({{"sample_id", it.sample_id}, {"template_version", payload.template_version},
               {"request", chat_request_body(a.endpoint, payload)}});
      continue;
    }
    std::string response;
    if (a.responses) {
      const auto c = canned.find(it.sample_id);
      if (c == canned.end()) {
        rej.write({{"sample_id", it.sample_id}, {"error", to_string(Errc::MissingKey)},
                   {"message", "no canned response"}});
        continue;
      }
      response = c->second;
    } else {
      bucket.acquire();
      response = call_endpoint(a.endpoint, payload, sleep).text;
      ++calls;
    }
    try {
      auto e = it.element;
      e.references = parse_re_response(response, true);
      RngStream rng(a.seed, "regen:" + it.sample_id);
      w.write({{"schema_version", kSchemaVersion},
               {"sample_id", it.sample_id},
               {"screen_id", it.screen_id},
               {"image", rebase(it.image, in_dir, dir_of(a.output))},
               {"dims", {{"w", it.dims.w}, {"h", it.dims.h}}},
               {"element", to_json(e)},
               {"template_version", payload.template_version},
               {"instruction", sample_re_combination(*e.references, rng)}});
    } catch (const Error& e) {
      rej.write({{"sample_id", it.sample_id}, {"error", to_string(e.code())}, {"message", e.what()}});
    }
  }
  w.close();
  rej.close();
  RunManifest m("regen",
                {{"template_version", std::string(prompts::kLongGoldVersion)},
                 {"model", a.endpoint.model_name},
                 {"dry_run", a.dry_run},
                 {"offline_responses", a.responses.has_value()}},
                a.seed);
  m.input(a.input);
  if (a.responses) m.input(*a.responses);
  m.output(a.output);
  m.output(rejects_path);
  m.count("samples", items.size());
  m.count("written", w.count());
  m.count("rejected", rej.count());
  m.count("endpoint_calls", calls);
  const auto j = m.to_json();
  m.write(a.manifest.empty() ? default_manifest(a.output) : a.manifest);
  return j;
}

// ---- triage -------------------------------------------------------------------

struct TriageArgs {
  fs::path input, out_dir, manifest;
  PairingPolicy policy;
  CoordFormat format = CoordFormat::Point;
  RoundSchedule schedule;
  int round_index = 0;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

inline PairingKind pairing_kind_from_string(std::string_view s) {
  if (s == "first_pair") return PairingKind::FirstPair;
  if (s == "all_pairs") return PairingKind::AllPairs;
  if (s == "max_k") return PairingKind::MaxK;
  throw Error(Errc::InvalidArgument, "unknown pairing policy '" + std::string(s) + "'");
}

inline json triage_stage(const TriageArgs& a) {
  std::vector<RolloutSet> sets;
  for_each_jsonl(a.input, [&](const json& j, std::size_t) { sets.push_back(rollout_set_from_json(j, a.format)); });
  const auto results = parallel_map(sets.size(), a.workers, [&](std::size_t i) { return triage(sets[i], a.policy); });

  std::vector<PreferencePair> pairs;
  std::vector<SftItem> sft;
  std::vector<std::pair<std::string, double>> difficulty;
  std::size_t zero_pair = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& r = results[i];
    pairs.insert(pairs.end(), r.pairs.begin(), r.pairs.end());
    for (const auto& t : r.reject_sft) sft.push_back({sets[i].sample_id, sets[i].prompt, t});
    difficulty.emplace_back(sets[i].sample_id, r.difficulty);
    zero_pair += r.pairs.empty();
  }
  const auto round = export_round(a.out_dir, pairs, sft, a.schedule, a.round_index);

  RngStream rng(a.seed, "curriculum:" + std::to_string(a.round_index));
  const auto order = curriculum_order(difficulty, rng);
  std::map<std::string, double> diff(difficulty.begin(), difficulty.end());
  const auto curriculum = round.dir / "curriculum.jsonl";
  JsonlWriter cw(curriculum);
  for (const auto& id : order) cw.write({{"sample_id", id}, {"difficulty", diff[id]}});
  cw.close();

  const char* policy = a.policy.kind == PairingKind::FirstPair ? "first_pair"
                       : a.policy.kind == PairingKind::AllPairs ? "all_pairs"
                                                                : "max_k";
  RunManifest m("triage",
                {{"pairing", policy},
                 {"max_k", a.policy.max_k},
                 {"format", to_string(a.format)},
                 {"rounds", a.schedule.rounds},
                 {"refresh_interval_steps", a.schedule.refresh_interval_steps},
                 {"round_index", a.round_index}},
                a.seed);
  m.input(a.input);
  m.output(round.dir / "pairs.jsonl");
  m.output(round.dir / "sft.jsonl");
  m.output(round.dir / "manifest.json");
  m.output(curriculum);
  m.count("samples", sets.size());
  m.count("pairs", round.pair_count);
  m.count("sft", round.sft_count);
  m.count("zero_pair_samples", zero_pair);
  const auto j = m.to_json();
  m.write(a.manifest.empty() ? round.dir / "run_manifest.json" : a.manifest);
  return j;
}

// ---- eval ---------------------------------------------------------------------

struct SliceAverage {
  std::string suite, key;
  std::vector<std::string> values;
};

/// Parses "suite:key=v1,v2".
inline SliceAverage parse_slice_average(const std::string& spec) {
  const auto colon = spec.find(':');
  const auto eq = spec.find('=', colon == std::string::npos ? 0 : colon);
  if (colon == std::string::npos || eq == std::string::npos) {
    throw Error(Errc::InvalidArgument, "average must look like suite:key=v1,v2");
  }
  SliceAverage s{spec.substr(0, colon), spec.substr(colon + 1, eq - colon - 1), {}};
  std::string rest = spec.substr(eq + 1);
  std::size_t pos = 0;
  while (pos <= rest.size()) {
    const auto comma = rest.find(',', pos);
    const auto v = rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (!v.empty()) s.values.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  return s;
}

struct EvalArgs {
  fs::path manifest_in, predictions, report_json, report_csv, manifest;
  LoadOptions load;
  ScoreOptions score;
  std::vector<std::string> averages;
};

inline json eval_stage(const EvalArgs& a) {
  const auto bench = load_benchmark(a.manifest_in, a.load);
  const auto preds = read_predictions(a.predictions);
  const auto rep = score(bench.records, preds, a.score);
  json rj = to_json(rep);
  rj["warnings"] = bench.warnings;
  json avgs = json::array();
  for (const auto& spec : a.averages) {
    const auto s = parse_slice_average(spec);
    avgs.push_back({{"spec", spec}, {"accuracy", average_slices(rep, s.suite, s.key, s.values)}});
  }
  rj["slice_averages"] = avgs;
  write_text_file(a.report_json, rj.dump(2) + "\n");
  if (!a.report_csv.empty()) write_text_file(a.report_csv, to_csv(rep));
  RunManifest m("eval",
                {{"click_source", a.score.click_source == ClickSource::PointDirect ? "point_direct" : "box_center"},
                 {"box_format", to_string(a.score.box_format)},
                 {"slice_keys", a.score.slice_keys},
                 {"require_images", a.load.require_images}},
                std::nullopt);
  m.input(a.manifest_in);
  m.input(a.predictions);
  m.output(a.report_json);
  if (!a.report_csv.empty()) m.output(a.report_csv);
  m.count("records", bench.records.size());
  m.count("predictions", preds.size());
  m.count("warnings", bench.warnings.size());
  const auto j = m.to_json();
  m.write(a.manifest.empty() ? default_manifest(a.report_json) : a.manifest);
  return j;
}

// ---- flops --------------------------------------------------------------------

/// Reads JSONL entries {name, params, image_tokens, score} and writes the Pareto CSV.
inline json flops_table_stage(const fs::path& input, const fs::path& output, const fs::path& manifest) {
  std::vector<ParetoEntry> entries;
  for_each_jsonl(input, [&](const json& j, std::size_t) {
    try {
      entries.push_back({j.at("name").get<std::string>(), j.at("params").get<double>(),
                         j.at("image_tokens").get<double>(), j.at("score").get<double>()});
    } catch (const json::exception& e) {
      throw Error(Errc::SchemaError, e.what());
    }
  });
  const auto rows = pareto_table(entries);
  write_text_file(output, pareto_csv(rows));
  RunManifest m("flops", json::object(), std::nullopt);
  m.input(input);
  m.output(output);
  m.count("entries", rows.size());
  m.count("frontier", static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(),
                                                             [](const ParetoRow& r) { return r.frontier; })));
  const auto j = m.to_json();
  m.write(manifest.empty() ? default_manifest(output) : manifest);
  return j;
}

// ---- export -------------------------------------------------------------------

inline json export_stage(const fs::path& screens, const fs::path& log, const fs::path& output,
                         const fs::path& manifest) {
  ReviewStore store(screens, log);
  write_text_file(output, store.export_jsonl());
  const auto p = store.progress();
  RunManifest m("export", json::object(), std::nullopt);
  m.input(screens);
  if (fs::exists(log)) m.input(log);
  m.output(output);
  m.count("screens", p.screens_total);
  m.count("elements_reviewed", p.elements_reviewed);
  const auto j = m.to_json();
  m.write(manifest.empty() ? default_manifest(output) : manifest);
  return j;
}

}  // namespace gground::stages
