#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gground/error.hpp"
#include "gground/geometry.hpp"

namespace gground {

inline constexpr int kSchemaVersion = 1;

/// The three reference expressions for one element, plus the context line.
struct ReferenceBundle {
  std::string context;
  std::string functional;
  std::string positional;
  std::string appearance;
  std::optional<std::string> area_type;  // "icon" | "text"
  std::optional<bool> interactive;

  friend bool operator==(const ReferenceBundle&, const ReferenceBundle&) = default;
};

enum class ElementKind { InteractiveText, InteractiveIcon, Image, Other };

inline std::string_view to_string(ElementKind k) {
  switch (k) {
    case ElementKind::InteractiveText: return "interactive_text";
    case ElementKind::InteractiveIcon: return "interactive_icon";
    case ElementKind::Image: return "image";
    case ElementKind::Other: return "other";
  }
  return "other";
}

inline ElementKind element_kind_from_string(std::string_view s) {
  if (s == "interactive_text") return ElementKind::InteractiveText;
  if (s == "interactive_icon") return ElementKind::InteractiveIcon;
  if (s == "image") return ElementKind::Image;
  if (s == "other") return ElementKind::Other;
  throw Error(Errc::SchemaError, "unknown element kind '" + std::string(s) + "'");
}

struct ElementRecord {
  std::string element_id;
  NormBox box;
  ElementKind kind = ElementKind::Other;
  std::string html_tag;
  std::map<std::string, std::string> attributes;
  std::optional<ReferenceBundle> references;
};

struct ScreenRecord {
  std::string screen_id;
  std::string image;
  PixelDims dims;
  std::string domain;
  std::vector<ElementRecord> elements;
  std::optional<std::string> layout;
};

// ---- JSON mapping ---------------------------------------------------------

inline nlohmann::json box_to_json(const NormBox& b) { return {b.x1, b.y1, b.x2, b.y2}; }

inline NormBox box_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4) throw Error(Errc::SchemaError, "box must be [x1,y1,x2,y2]");
  NormBox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!is_valid(b)) throw Error(Errc::SchemaError, "box outside [0,1] or inverted");
  return b;
}

inline nlohmann::json to_json(const ReferenceBundle& r) {
  nlohmann::json j = {{"context", r.context},
                      {"functional_reference", r.functional},
                      {"positional_reference", r.positional},
                      {"appearance_reference", r.appearance}};
  if (r.area_type) j["area_type"] = *r.area_type;
  if (r.interactive) j["interactive"] = *r.interactive;
  return j;
}

inline ReferenceBundle reference_bundle_from_json(const nlohmann::json& j) {
  ReferenceBundle r;
  r.context = j.value("context", "");
  r.functional = j.value("functional_reference", "");
  r.positional = j.value("positional_reference", "");
  r.appearance = j.value("appearance_reference", "");
  if (j.contains("area_type") && j["area_type"].is_string()) r.area_type = j["area_type"].get<std::string>();
  if (j.contains("interactive") && j["interactive"].is_boolean()) r.interactive = j["interactive"].get<bool>();
  return r;
}

inline nlohmann::json to_json(const ElementRecord& e) {
  nlohmann::json j = {{"element_id", e.element_id},
                      {"box", box_to_json(e.box)},
                      {"kind", to_string(e.kind)},
                      {"html_tag", e.html_tag},
                      {"attributes", e.attributes}};
  if (e.references) j["references"] = to_json(*e.references);
  return j;
}

inline ElementRecord element_from_json(const nlohmann::json& j) {
  ElementRecord e;
  e.element_id = j.at("element_id").get<std::string>();
  e.box = box_from_json(j.at("box"));
  e.kind = element_kind_from_string(j.value("kind", "other"));
  e.html_tag = j.value("html_tag", "");
  if (j.contains("attributes")) {
    for (const auto& [k, v] : j["attributes"].items()) {
      e.attributes[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
  }
  if (j.contains("references") && j["references"].is_object()) {
    e.references = reference_bundle_from_json(j["references"]);
  }
  return e;
}

inline nlohmann::json to_json(const ScreenRecord& s) {
  nlohmann::json elements = nlohmann::json::array();
  for (const auto& e : s.elements) elements.push_back(to_json(e));
  nlohmann::json j = {{"schema_version", kSchemaVersion},
                      {"screen_id", s.screen_id},
                      {"image", s.image},
                      {"dims", {{"w", s.dims.w}, {"h", s.dims.h}}},
                      {"domain", s.domain},
                      {"elements", std::move(elements)}};
  if (s.layout) j["layout"] = *s.layout;
  return j;
}

inline ScreenRecord screen_from_json(const nlohmann::json& j) {
  try {
    ScreenRecord s;
    s.screen_id = j.at("screen_id").get<std::string>();
    s.image = j.value("image", "");
    s.dims = {j.at("dims").at("w").get<int>(), j.at("dims").at("h").get<int>()};
    if (!is_valid(s.dims)) throw Error(Errc::SchemaError, "dims must be positive");
    s.domain = j.value("domain", "");
    for (const auto& e : j.value("elements", nlohmann::json::array())) {
      s.elements.push_back(element_from_json(e));
    }
    if (j.contains("layout") && j["layout"].is_string()) s.layout = j["layout"].get<std::string>();
    return s;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(Errc::SchemaError, ex.what());
  }
}

// ---- JSONL ----------------------------------------------------------------

/// Calls `fn(json, line_number)` for each non-blank line. Line numbers are 1-based.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const nlohmann::json&, std::size_t)>& fn) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoFailure, "cannot open '" + path.string() + "'");
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& ex) {
      throw Error(Errc::SchemaError,
                  path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
    }
    try {
      fn(j, lineno);
    } catch (const Error& ex) {
      if (ex.code() == Errc::SchemaError) {
        throw Error(Errc::SchemaError, path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
      }
      throw;
    }
  }
}

inline std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path) {
  std::vector<nlohmann::json> out;
  for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) { out.push_back(j); });
  return out;
}

inline std::vector<ScreenRecord> read_screens(const std::filesystem::path& path) {
  std::vector<ScreenRecord> out;
  for_each_jsonl(path, [&](const nlohmann::json& j, std::size_t) { out.push_back(screen_from_json(j)); });
  return out;
}

/// Line-oriented writer; one compact JSON document per line.
class JsonlWriter {
 public:
  explicit JsonlWriter(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error(Errc::IoFailure, "cannot write '" + path.string() + "'");
  }

  void write(const nlohmann::json& j) {
    out_ << j.dump() << '\n';
    ++count_;
  }

  void close() {
    out_.close();
    if (!out_) throw Error(Errc::IoFailure, "failed writing '" + path_.string() + "'");
  }

  [[nodiscard]] std::size_t count() const { return count_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::size_t count_ = 0;
};

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(Errc::IoFailure, "cannot write '" + path.string() + "'");
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot read '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace gground
