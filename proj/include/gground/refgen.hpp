#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gground/error.hpp"
#include "gground/prompts.hpp"
#include "gground/records.hpp"
#include "gground/rng.hpp"

namespace gground {

/// One entry of the user turn: an optional heading, an optional image and
/// optional free text, rendered in that order.
struct UserPart {
  std::string header;
  std::optional<std::string> image;
  std::string text;
};

struct PromptPayload {
  std::string template_version;
  std::string system_text;
  std::vector<UserPart> user_parts;
};

namespace detail {

inline bool is_uri(std::string_view ref) {
  return ref.starts_with("http://") || ref.starts_with("https://") || ref.starts_with("data:");
}

inline void require_asset(const std::string& ref, std::string_view what) {
  if (ref.empty() || (!is_uri(ref) && !std::filesystem::exists(ref))) {
    throw Error(Errc::MissingAsset, std::string(what) + " '" + ref + "' not found");
  }
}

}  // namespace detail

/// Prompt for reference generation from a highlighted screenshot plus a crop of
/// the target.
inline PromptPayload build_longgold_prompt(const std::string& screenshot_with_highlight,
                                           const std::string& cropped_target) {
  detail::require_asset(screenshot_with_highlight, "highlighted screenshot");
  detail::require_asset(cropped_target, "cropped target");
  return {std::string(prompts::kLongGoldVersion),
          std::string(prompts::kLongGoldSystem),
          {{"# Screenshot with highlight", screenshot_with_highlight, ""},
           {"# Cropped target image", cropped_target, ""}}};
}

/// Prompt for expanding a short instruction into the long references.
inline PromptPayload build_long_prompt(const std::string& screenshot,
                                       const std::string& short_instruction) {
  if (short_instruction.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw Error(Errc::EmptyInstruction, "short instruction is empty");
  }
  detail::require_asset(screenshot, "screenshot");
  return {std::string(prompts::kLongVersion),
          std::string(prompts::kLongSystem),
          {{"# Screenshot", screenshot, ""}, {"", std::nullopt, "# Instruction\n" + short_instruction}}};
}

/// Extracts and validates the fenced JSON block that follows "# Output".
///
/// Agent mode requires context and the three references; gold mode also
/// requires area_type ("icon" | "text") and a boolean interactive.
inline ReferenceBundle parse_re_response(std::string_view raw, bool expect_gold_keys) {
  const auto marker = raw.find("# Output");
  if (marker == std::string_view::npos) {
    throw Error(Errc::NoJsonBlock, "response has no '# Output' section");
  }
  const auto open = raw.find("```", marker);
  if (open == std::string_view::npos) {
    throw Error(Errc::NoJsonBlock, "no fenced block after '# Output'");
  }
  const auto body_start = raw.find('\n', open);
  const auto close = body_start == std::string_view::npos ? std::string_view::npos
                                                          : raw.find("```", body_start);
  if (close == std::string_view::npos) {
    throw Error(Errc::NoJsonBlock, "fenced block after '# Output' is not closed");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(raw.substr(body_start + 1, close - body_start - 1));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::BadJson, e.what());
  }
  if (!j.is_object()) throw Error(Errc::BadJson, "fenced block is not a JSON object");

  auto text_field = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_string() || j[key].get<std::string>().empty()) {
      throw Error(Errc::MissingKey, key);
    }
    return j[key].get<std::string>();
  };
  ReferenceBundle b;
  b.context = text_field("context");
  b.functional = text_field("functional_reference");
  b.positional = text_field("positional_reference");
  b.appearance = text_field("appearance_reference");
  if (expect_gold_keys) {
    if (!j.contains("area_type")) throw Error(Errc::MissingKey, "area_type");
    if (!j["area_type"].is_string()) throw Error(Errc::BadEnum, "area_type must be a string");
    const auto area = j["area_type"].get<std::string>();
    if (area != "icon" && area != "text") throw Error(Errc::BadEnum, "area_type '" + area + "'");
    b.area_type = area;
    if (!j.contains("interactive")) throw Error(Errc::MissingKey, "interactive");
    if (!j["interactive"].is_boolean()) throw Error(Errc::BadEnum, "interactive must be a boolean");
    b.interactive = j["interactive"].get<bool>();
  }
  return b;
}

/// Formats a bundle the way a well-behaved model answers.
inline std::string render_re_response(const ReferenceBundle& b, std::string_view analysis = "") {
  nlohmann::ordered_json j;
  if (b.area_type) j["area_type"] = *b.area_type;
  if (b.interactive) j["interactive"] = *b.interactive;
  j["context"] = b.context;
  j["functional_reference"] = b.functional;
  j["positional_reference"] = b.positional;
  j["appearance_reference"] = b.appearance;
  std::string out = "# Analyze\n";
  out += analysis;
  out += "\n# Output\n```json\n" + j.dump(4) + "\n```\n";
  return out;
}

/// Non-empty subset of {functional, positional, appearance} as a bit mask
/// (bit 0 functional, bit 1 positional, bit 2 appearance), uniform over 1..7.
inline unsigned draw_re_subset(RngStream& rng) { return static_cast<unsigned>(rng.uniform_int(1, 7)); }

inline std::string combine_references(const ReferenceBundle& b, unsigned mask) {
  const std::array<const std::string*, 3> parts{&b.functional, &b.positional, &b.appearance};
  std::string out;
  for (unsigned i = 0; i < 3; ++i) {
    if (!(mask & (1u << i))) continue;
    if (!out.empty()) out += ' ';
    out += *parts[i];
  }
  return out;
}

/// A random combination of the references, always in functional, positional,
/// appearance order.
inline std::string sample_re_combination(const ReferenceBundle& b, RngStream& rng) {
  return combine_references(b, draw_re_subset(rng));
}

}  // namespace gground
