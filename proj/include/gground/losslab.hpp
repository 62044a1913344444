#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "gground/error.hpp"
#include "gground/rng.hpp"

namespace gground {

struct VocabSpec {
  std::size_t size = 0;
  std::map<std::size_t, int> digit_tokens;  // token id -> digit value 0..9
  std::optional<std::size_t> point_token;

  void validate() const {
    for (const auto& [id, digit] : digit_tokens) {
      if (id >= size) throw Error(Errc::DimensionMismatch, "digit token id outside the vocabulary");
      if (digit < 0 || digit > 9) throw Error(Errc::InvalidArgument, "digit value outside 0..9");
    }
  }

  /// A vocabulary whose first ten ids are the digits "0".."9".
  static VocabSpec with_leading_digits(std::size_t size) {
    VocabSpec v;
    v.size = size;
    for (int d = 0; d < 10; ++d) v.digit_tokens[static_cast<std::size_t>(d)] = d;
    return v;
  }
};

enum class DigitDistance { Squared, Absolute };

struct SmoothingConfig {
  double psi = 10.0;
  DigitDistance distance = DigitDistance::Squared;
  bool clamp_at_zero = true;
};

inline double digit_distance(int k, int t, DigitDistance d) {
  const double diff = k - t;
  return d == DigitDistance::Squared ? diff * diff : std::abs(diff);
}

/// Distance-aware soft targets for a digit token:
///   1 at the target, 1 - d(K,T)/psi at other digits, 0 elsewhere.
inline std::vector<double> smoothed_labels(const VocabSpec& vocab, std::size_t target_token,
                                           const SmoothingConfig& cfg) {
  vocab.validate();
  if (!(cfg.psi > 0.0)) throw Error(Errc::InvalidConfig, "psi must be positive");
  const auto target = vocab.digit_tokens.find(target_token);
  if (target == vocab.digit_tokens.end()) {
    throw Error(Errc::NonDigitTarget, "token " + std::to_string(target_token) + " is not a digit");
  }
  std::vector<double> labels(vocab.size, 0.0);
  for (const auto& [id, digit] : vocab.digit_tokens) {
    if (id == target_token) {
      labels[id] = 1.0;
      continue;
    }
    double v = 1.0 - digit_distance(digit, target->second, cfg.distance) / cfg.psi;
    if (cfg.clamp_at_zero && v < 0.0) v = 0.0;
    labels[id] = v;
  }
  return labels;
}

/// -sum y log p, the cross-entropy form used for training.
inline double smoothed_cross_entropy(std::span<const double> labels, std::span<const double> probs) {
  if (labels.size() != probs.size()) throw Error(Errc::DimensionMismatch, "labels vs probs");
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0.0) loss -= labels[i] * std::log(probs[i]);
  }
  return loss;
}

/// -sum y p, the linear form equivalent to the regularized squared-error loss.
inline double smoothed_linear_loss(std::span<const double> labels, std::span<const double> probs) {
  if (labels.size() != probs.size()) throw Error(Errc::DimensionMismatch, "labels vs probs");
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) loss -= labels[i] * probs[i];
  return loss;
}

// ---- digit-position reweighting ------------------------------------------------

enum class DigitPlace { NonDigit, Hundreds, Tens, Units };

struct ReweightScheme {
  double hundreds = 1.0;
  double tens = 1.0;
  double units = 1.0;

  void validate() const {
    for (double w : {hundreds, tens, units}) {
      if (!(w >= 0.0) || w > 1.0) {
        throw Error(Errc::InvalidScheme, "digit weights must lie in [0, 1]; got " +
                                             std::to_string(w));
      }
    }
  }

  static ReweightScheme uniform() { return {1.0, 1.0, 1.0}; }
  static ReweightScheme decimal() { return {1.0, 1.0 / 10.0, 1.0 / 100.0}; }
  static ReweightScheme sqrt10() { return {1.0, 1.0 / std::sqrt(10.0), 1.0 / 10.0}; }
  static ReweightScheme ln10() {
    return {1.0, 1.0 / std::numbers::ln10, 1.0 / (std::numbers::ln10 * std::numbers::ln10)};
  }
};

/// Place annotation for a coordinate string tokenized one character per token.
/// Digit runs are right-aligned: the last digit is units, then tens, then
/// hundreds; a fourth leading digit (only "1000") counts as hundreds.
inline std::vector<DigitPlace> annotate_digit_places(std::string_view text) {
  std::vector<DigitPlace> out(text.size(), DigitPlace::NonDigit);
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] < '0' || text[i] > '9') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < text.size() && text[j] >= '0' && text[j] <= '9') ++j;
    const std::size_t len = j - i;
    if (len > 4) throw Error(Errc::InvalidArgument, "coordinate with more than 4 digits");
    for (std::size_t k = 0; k < len; ++k) {
      const std::size_t from_right = len - 1 - k;
      out[i + k] = from_right == 0 ? DigitPlace::Units
                   : from_right == 1 ? DigitPlace::Tens
                                     : DigitPlace::Hundreds;
    }
    i = j;
  }
  return out;
}

inline std::vector<double> reweight_weights(std::span<const DigitPlace> places,
                                            const ReweightScheme& scheme) {
  scheme.validate();
  std::vector<double> w;
  w.reserve(places.size());
  for (auto p : places) {
    switch (p) {
      case DigitPlace::NonDigit: w.push_back(1.0); break;
      case DigitPlace::Hundreds: w.push_back(scheme.hundreds); break;
      case DigitPlace::Tens: w.push_back(scheme.tens); break;
      case DigitPlace::Units: w.push_back(scheme.units); break;
    }
  }
  return w;
}

// ---- special-token embedding initialization ---------------------------------------

struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  [[nodiscard]] std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
  void set_row(std::size_t r, std::span<const double> v) {
    std::copy(v.begin(), v.end(), data.begin() + static_cast<std::ptrdiff_t>(r * cols));
  }
};

enum class InitStrategy { Hf, RDigit, DigitMean, MainDigit };

inline InitStrategy init_strategy_from_string(std::string_view s) {
  if (s == "hf") return InitStrategy::Hf;
  if (s == "r_digit") return InitStrategy::RDigit;
  if (s == "digit_mean") return InitStrategy::DigitMean;
  if (s == "main_digit") return InitStrategy::MainDigit;
  throw Error(Errc::InvalidArgument, "unknown init strategy '" + std::string(s) + "'");
}

/// Rows for the value tokens <p 0>..<p count-1> and the two markers
/// (<point>, </point>).
struct SpecialEmbeddings {
  Matrix values;
  Matrix markers;
};

struct ColumnStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population
};

inline ColumnStats column_stats(const Matrix& m, std::span<const std::size_t> rows) {
  ColumnStats s{std::vector<double>(m.cols, 0.0), std::vector<double>(m.cols, 0.0)};
  for (auto r : rows) {
    for (std::size_t c = 0; c < m.cols; ++c) s.mean[c] += m(r, c);
  }
  for (auto& v : s.mean) v /= static_cast<double>(rows.size());
  for (auto r : rows) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      const double d = m(r, c) - s.mean[c];
      s.stddev[c] += d * d;
    }
  }
  for (auto& v : s.stddev) v = std::sqrt(v / static_cast<double>(rows.size()));
  return s;
}

/// Initial embeddings for newly added coordinate tokens.
///
/// `digit_ids[d]` is the token id of the digit d. Strategies:
///  - Hf: every row ~ Normal(mean, std) of all embeddings, per dimension.
///  - RDigit: value rows ~ Normal(mean, std) of the digit embeddings; markers
///    copy the embedding of `point_token_id`.
///  - DigitMean: <p 0>..<p 9> copy the digit embeddings, larger values take
///    the digit mean; markers as RDigit.
///  - MainDigit: <p v> copies the digit in the hundreds place of v written
///    with three digits (v = 1000 uses "1"); markers as RDigit.
inline SpecialEmbeddings init_special_embeddings(const Matrix& pretrained,
                                                 std::span<const std::size_t> digit_ids,
                                                 std::size_t point_token_id, InitStrategy strategy,
                                                 std::size_t count, RngStream& rng) {
  if (pretrained.rows == 0 || pretrained.cols == 0 ||
      pretrained.data.size() != pretrained.rows * pretrained.cols) {
    throw Error(Errc::DimensionMismatch, "pretrained embedding matrix is empty or malformed");
  }
  if (digit_ids.size() != 10) throw Error(Errc::DimensionMismatch, "need exactly ten digit ids");
  for (auto id : digit_ids) {
    if (id >= pretrained.rows) throw Error(Errc::DimensionMismatch, "digit id outside the matrix");
  }
  if (point_token_id >= pretrained.rows) {
    throw Error(Errc::DimensionMismatch, "point token id outside the matrix");
  }
  if (count == 0 || count > 1001) {
    throw Error(Errc::DimensionMismatch, "value token count must be in [1, 1001]");
  }

  const std::size_t dim = pretrained.cols;
  SpecialEmbeddings out{Matrix(count, dim), Matrix(2, dim)};

  auto draw_rows = [&](Matrix& m, const ColumnStats& st) {
    for (std::size_t r = 0; r < m.rows; ++r) {
      for (std::size_t c = 0; c < dim; ++c) m(r, c) = st.mean[c] + st.stddev[c] * rng.normal();
    }
  };
  auto point_markers = [&] {
    out.markers.set_row(0, pretrained.row(point_token_id));
    out.markers.set_row(1, pretrained.row(point_token_id));
  };

  switch (strategy) {
    case InitStrategy::Hf: {
      std::vector<std::size_t> all(pretrained.rows);
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      const auto st = column_stats(pretrained, all);
      draw_rows(out.markers, st);
      draw_rows(out.values, st);
      break;
    }
    case InitStrategy::RDigit:
      point_markers();
      draw_rows(out.values, column_stats(pretrained, digit_ids));
      break;
    case InitStrategy::DigitMean: {
      point_markers();
      const auto st = column_stats(pretrained, digit_ids);
      for (std::size_t v = 0; v < count; ++v) {
        if (v < 10) {
          out.values.set_row(v, pretrained.row(digit_ids[v]));
        } else {
          out.values.set_row(v, st.mean);
        }
      }
      break;
    }
    case InitStrategy::MainDigit:
      point_markers();
      for (std::size_t v = 0; v < count; ++v) {
        const std::size_t digit = v >= 1000 ? 1 : v / 100;
        out.values.set_row(v, pretrained.row(digit_ids[digit]));
      }
      break;
  }
  return out;
}

// ---- binary export -------------------------------------------------------------

/// Writes `values` as: one JSON header line, then little-endian float64 data.
/// The header always carries "dtype" and "length"; `extra` is merged in.
inline void write_vector_file(const std::filesystem::path& path, std::span<const double> values,
                              nlohmann::json extra = nlohmann::json::object()) {
  nlohmann::json header = std::move(extra);
  header["dtype"] = "float64-le";
  header["length"] = values.size();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot write '" + path.string() + "'");
  out << header.dump() << '\n';
  for (double v : values) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char buf[8];
    for (int b = 0; b < 8; ++b) buf[b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    out.write(buf, 8);
  }
  if (!out) throw Error(Errc::IoFailure, "failed writing '" + path.string() + "'");
}

struct VectorFile {
  nlohmann::json header;
  std::vector<double> values;
};

inline VectorFile read_vector_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot read '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  VectorFile f;
  try {
    f.header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::SchemaError, std::string("bad vector header: ") + e.what());
  }
  const auto n = f.header.at("length").get<std::size_t>();
  f.values.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    unsigned char buf[8];
    if (!in.read(reinterpret_cast<char*>(buf), 8)) {
      throw Error(Errc::SchemaError, "vector file truncated");
    }
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
    f.values[i] = std::bit_cast<double>(bits);
  }
  return f;
}

}  // namespace gground
