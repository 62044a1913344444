#pragma once

#include <algorithm>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "gground/checksum.hpp"
#include "gground/error.hpp"
#include "gground/geometry.hpp"
#include "gground/records.hpp"
#include "gground/rng.hpp"

namespace gground {

struct Rollout {
  std::string raw_text;
  std::optional<NormPoint> click;  // empty when the text does not parse
  bool correct = false;
};

struct RolloutSet {
  std::string sample_id;
  NormBox gt_box;
  std::optional<std::string> prompt;
  std::vector<Rollout> rollouts;
};

/// Click point of a model output: the point itself, or the center of a box.
inline std::optional<NormPoint> click_of(std::string_view raw, CoordFormat fmt) {
  try {
    const auto g = parse(raw, fmt);
    if (const auto* p = std::get_if<NormPoint>(&g)) return *p;
    return box_center(std::get<NormBox>(g));
  } catch (const Error&) {
    return std::nullopt;
  }
}

/// Recomputes click and correctness of every rollout from geometry.
inline void score_rollouts(RolloutSet& rs, CoordFormat fmt) {
  for (auto& r : rs.rollouts) {
    r.click = click_of(r.raw_text, fmt);
    r.correct = r.click && click_hit(*r.click, rs.gt_box);
  }
}

inline RolloutSet rollout_set_from_json(const nlohmann::json& j, CoordFormat fmt) {
  RolloutSet rs;
  try {
    rs.sample_id = j.at("sample_id").get<std::string>();
    rs.gt_box = box_from_json(j.at("gt_box"));
    if (j.contains("prompt") && j["prompt"].is_string()) rs.prompt = j["prompt"].get<std::string>();
    for (const auto& r : j.at("rollouts")) {
      rs.rollouts.push_back({r.is_string() ? r.get<std::string>() : r.at("raw_text").get<std::string>(),
                             std::nullopt, false});
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaError, e.what());
  }
  score_rollouts(rs, fmt);
  return rs;
}

struct PreferencePair {
  std::string sample_id;
  std::optional<std::string> prompt;
  std::string chosen;
  std::string rejected;
  NormBox gt_box;
  NormPoint chosen_click;
  std::optional<NormPoint> rejected_click;
};

enum class PairingKind { FirstPair, AllPairs, MaxK };

struct PairingPolicy {
  PairingKind kind = PairingKind::MaxK;
  std::size_t max_k = 4;
};

enum class RolloutCase { Mixed, AllCorrect, AllIncorrect };

struct TriageResult {
  RolloutCase rollout_case = RolloutCase::Mixed;
  std::vector<PreferencePair> pairs;
  std::vector<std::string> reject_sft;
  std::size_t correct = 0;
  std::size_t total = 0;
  double difficulty = 0.0;
};

/// Splits scored rollouts into preference pairs (mixed sets only), the correct
/// texts for reject-sampling finetuning, and a difficulty of 1 - accuracy.
/// Pairs enumerate (correct i, incorrect j) in rollout order.
inline TriageResult triage(const RolloutSet& rs, const PairingPolicy& policy) {
  if (rs.rollouts.empty()) {
    throw Error(Errc::EmptyRollouts, "sample '" + rs.sample_id + "' has no rollouts");
  }
  TriageResult out;
  out.total = rs.rollouts.size();
  std::vector<const Rollout*> good, bad;
  for (const auto& r : rs.rollouts) (r.correct ? good : bad).push_back(&r);
  out.correct = good.size();
  out.difficulty = 1.0 - static_cast<double>(good.size()) / static_cast<double>(out.total);
  for (const auto* g : good) out.reject_sft.push_back(g->raw_text);

  if (good.empty()) {
    out.rollout_case = RolloutCase::AllIncorrect;
    return out;
  }
  if (bad.empty()) {
    out.rollout_case = RolloutCase::AllCorrect;
    return out;
  }
  out.rollout_case = RolloutCase::Mixed;
  std::size_t limit = good.size() * bad.size();
  if (policy.kind == PairingKind::FirstPair) limit = 1;
  if (policy.kind == PairingKind::MaxK) limit = std::min(limit, policy.max_k);
  for (const auto* g : good) {
    for (const auto* b : bad) {
      if (out.pairs.size() >= limit) return out;
      out.pairs.push_back({rs.sample_id, rs.prompt, g->raw_text, b->raw_text, rs.gt_box, *g->click,
                           b->click});
    }
  }
  return out;
}

/// Ascending difficulty; ties fall back to a seeded shuffle.
inline std::vector<std::string> curriculum_order(
    const std::vector<std::pair<std::string, double>>& samples, RngStream& rng) {
  auto order = samples;
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) { return a.second < b.second; });
  std::vector<std::string> ids;
  ids.reserve(order.size());
  for (auto& [id, d] : order) ids.push_back(std::move(id));
  return ids;
}

struct RoundSchedule {
  int rounds = 3;
  int refresh_interval_steps = 100;
};

struct SftItem {
  std::string sample_id;
  std::optional<std::string> prompt;
  std::string text;
};

struct RoundManifest {
  int round_index = 0;
  std::filesystem::path dir;
  std::size_t pair_count = 0;
  std::size_t sft_count = 0;
  nlohmann::json json;
};

inline bool pair_is_consistent(const PreferencePair& p) {
  return click_hit(p.chosen_click, p.gt_box) &&
         !(p.rejected_click && click_hit(*p.rejected_click, p.gt_box));
}

/// Writes round_<k>/{pairs.jsonl, sft.jsonl, manifest.json} under `out_dir`.
/// Every pair is re-verified against its ground-truth box before writing.
inline RoundManifest export_round(const std::filesystem::path& out_dir,
                                  const std::vector<PreferencePair>& pairs,
                                  const std::vector<SftItem>& reject_sft,
                                  const RoundSchedule& schedule, int round_index) {
  if (schedule.rounds < 1) throw Error(Errc::InvalidConfig, "rounds must be >= 1");
  if (round_index < 0 || round_index >= schedule.rounds) {
    throw Error(Errc::InvalidArgument, "round index " + std::to_string(round_index) +
                                           " outside [0, " + std::to_string(schedule.rounds) + ")");
  }
  RoundManifest m;
  m.round_index = round_index;
  m.dir = out_dir / ("round_" + std::to_string(round_index));
  try {
    std::filesystem::create_directories(m.dir);
  } catch (const std::filesystem::filesystem_error& e) {
    throw Error(Errc::IoFailure, e.what());
  }

  JsonlWriter pw(m.dir / "pairs.jsonl");
  for (const auto& p : pairs) {
    if (!pair_is_consistent(p)) {
      throw Error(Errc::InvalidArgument, "pair for '" + p.sample_id + "' fails re-verification");
    }
    nlohmann::json j = {{"schema_version", kSchemaVersion},
                        {"sample_id", p.sample_id},
                        {"chosen", p.chosen},
                        {"rejected", p.rejected}};
    if (p.prompt) j["prompt"] = *p.prompt;
    pw.write(j);
  }
  pw.close();
  JsonlWriter sw(m.dir / "sft.jsonl");
  for (const auto& s : reject_sft) {
    nlohmann::json j = {{"schema_version", kSchemaVersion}, {"sample_id", s.sample_id}, {"completion", s.text}};
    if (s.prompt) j["prompt"] = *s.prompt;
    sw.write(j);
  }
  sw.close();
  m.pair_count = pw.count();
  m.sft_count = sw.count();

  m.json = {{"schema_version", kSchemaVersion},
            {"round_index", round_index},
            {"rounds", schedule.rounds},
            {"refresh_interval_steps", schedule.refresh_interval_steps},
            {"pairs", {{"path", "pairs.jsonl"}, {"count", m.pair_count},
                       {"sha256", sha256_file(m.dir / "pairs.jsonl")}}},
            {"sft", {{"path", "sft.jsonl"}, {"count", m.sft_count},
                     {"sha256", sha256_file(m.dir / "sft.jsonl")}}}};
  write_text_file(m.dir / "manifest.json", m.json.dump(2) + "\n");
  return m;
}

}  // namespace gground
