#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gground/error.hpp"
#include "gground/raster.hpp"
#include "gground/records.hpp"

namespace gground {

enum class Decision { Keep, Remove };

inline std::string_view to_string(Decision d) { return d == Decision::Keep ? "keep" : "remove"; }

inline Decision decision_from_string(std::string_view s) {
  if (s == "keep") return Decision::Keep;
  if (s == "remove") return Decision::Remove;
  throw Error(Errc::SchemaError, "decision must be 'keep' or 'remove'");
}

struct Verdict {
  std::string screen_id;
  std::string element_id;
  Decision decision = Decision::Keep;
  std::string reviewer;
  std::string timestamp;
};

inline nlohmann::json to_json(const Verdict& v) {
  return {{"schema_version", kSchemaVersion}, {"screen_id", v.screen_id}, {"element_id", v.element_id},
          {"decision", to_string(v.decision)}, {"reviewer", v.reviewer}, {"timestamp", v.timestamp}};
}

inline Verdict verdict_from_json(const nlohmann::json& j) {
  try {
    return {j.at("screen_id").get<std::string>(), j.at("element_id").get<std::string>(),
            decision_from_string(j.at("decision").get<std::string>()), j.value("reviewer", ""),
            j.value("timestamp", "")};
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::SchemaError, e.what());
  }
}

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Screens loaded read-only from a JSONL file plus an append-only verdict log.
/// State is rebuilt from the log on open; a torn final line is ignored.
class ReviewStore {
 public:
  ReviewStore(std::filesystem::path screens_path, std::filesystem::path log_path)
      : screens_path_(std::move(screens_path)), log_path_(std::move(log_path)) {
    screens_ = read_screens(screens_path_);
    for (std::size_t i = 0; i < screens_.size(); ++i) {
      if (!index_.emplace(screens_[i].screen_id, i).second) {
        throw Error(Errc::SchemaError, "duplicate screen_id '" + screens_[i].screen_id + "'");
      }
    }
    replay();
  }

  [[nodiscard]] const std::vector<ScreenRecord>& screens() const { return screens_; }
  [[nodiscard]] const std::filesystem::path& screens_path() const { return screens_path_; }
  [[nodiscard]] std::size_t log_lines() const {
    std::shared_lock lock(mu_);
    return log_lines_;
  }

  [[nodiscard]] const ScreenRecord* find(const std::string& screen_id) const {
    const auto it = index_.find(screen_id);
    return it == index_.end() ? nullptr : &screens_[it->second];
  }

  [[nodiscard]] std::optional<Verdict> verdict(const std::string& screen_id, const std::string& element_id) const {
    std::shared_lock lock(mu_);
    const auto it = latest_.find(key(screen_id, element_id));
    if (it == latest_.end()) return std::nullopt;
    return it->second;
  }

  /// Validates ids, appends the verdict to the log with fsync, then applies it.
  void record(Verdict v) {
    const auto* s = find(v.screen_id);
    if (!s) throw Error(Errc::UnknownRecordId, "unknown screen '" + v.screen_id + "'");
    if (std::none_of(s->elements.begin(), s->elements.end(),
                     [&](const ElementRecord& e) { return e.element_id == v.element_id; })) {
      throw Error(Errc::UnknownRecordId, "unknown element '" + v.element_id + "'");
    }
    if (v.timestamp.empty()) v.timestamp = utc_timestamp();
    std::unique_lock lock(mu_);
    append_line(to_json(v).dump() + "\n");
    ++log_lines_;
    latest_[key(v.screen_id, v.element_id)] = std::move(v);
  }

  /// Rewrites the log to hold only the effective verdicts (temp file + rename).
  void compact() {
    std::unique_lock lock(mu_);
    const auto tmp = log_path_.string() + ".tmp";
    std::string body;
    std::size_t lines = 0;
    for (const auto& s : screens_) {
      for (const auto& e : s.elements) {
        const auto it = latest_.find(key(s.screen_id, e.element_id));
        if (it == latest_.end()) continue;
        body += to_json(it->second).dump() + "\n";
        ++lines;
      }
    }
    write_synced(tmp, body, O_WRONLY | O_CREAT | O_TRUNC);
    std::error_code ec;
    std::filesystem::rename(tmp, log_path_, ec);
    if (ec) throw Error(Errc::IoFailure, "compaction rename failed: " + ec.message());
    log_lines_ = lines;
  }

  struct Progress {
    std::size_t screens_total = 0;
    std::size_t screens_reviewed = 0;  // every element has a verdict
    std::size_t elements_total = 0;
    std::size_t elements_reviewed = 0;
  };

  [[nodiscard]] std::size_t reviewed_elements(const ScreenRecord& s) const {
    std::shared_lock lock(mu_);
    std::size_t n = 0;
    for (const auto& e : s.elements) n += latest_.count(key(s.screen_id, e.element_id));
    return n;
  }

  [[nodiscard]] Progress progress() const {
    Progress p;
    for (const auto& s : screens_) {
      const auto r = reviewed_elements(s);
      ++p.screens_total;
      p.screens_reviewed += r == s.elements.size();
      p.elements_total += s.elements.size();
      p.elements_reviewed += r;
    }
    return p;
  }

  /// Screens in input order with removed elements dropped.
  [[nodiscard]] std::string export_jsonl() const {
    std::shared_lock lock(mu_);
    std::string out;
    for (auto s : screens_) {
      std::erase_if(s.elements, [&](const ElementRecord& e) {
        const auto it = latest_.find(key(s.screen_id, e.element_id));
        return it != latest_.end() && it->second.decision == Decision::Remove;
      });
      out += to_json(s).dump() + "\n";
    }
    return out;
  }

 private:
  static std::string key(const std::string& s, const std::string& e) { return s + '\x1f' + e; }

  static void write_synced(const std::string& path, const std::string& data, int flags) {
    const int fd = ::open(path.c_str(), flags | O_CLOEXEC, 0644);
    if (fd < 0) throw Error(Errc::IoFailure, "cannot open '" + path + "'");
    std::size_t off = 0;
    while (off < data.size()) {
      const auto n = ::write(fd, data.data() + off, data.size() - off);
      if (n < 0) {
        ::close(fd);
        throw Error(Errc::IoFailure, "write to '" + path + "' failed");
      }
      off += static_cast<std::size_t>(n);
    }
    const bool ok = ::fsync(fd) == 0;
    ::close(fd);
    if (!ok) throw Error(Errc::IoFailure, "fsync of '" + path + "' failed");
  }

  void append_line(const std::string& line) {
    write_synced(log_path_.string(), line, O_WRONLY | O_CREAT | O_APPEND);
  }

  void replay() {
    if (!std::filesystem::exists(log_path_)) return;
    const auto text = read_text_file(log_path_);
    std::size_t pos = 0;
    while (pos < text.size()) {
      const auto nl = text.find('\n', pos);
      if (nl == std::string::npos) break;  // torn tail from an interrupted append
      const auto line = text.substr(pos, nl - pos);
      pos = nl + 1;
      if (line.empty()) continue;
      try {
        auto v = verdict_from_json(nlohmann::json::parse(line));
        if (!find(v.screen_id)) continue;
        latest_[key(v.screen_id, v.element_id)] = std::move(v);
        ++log_lines_;
      } catch (const std::exception&) {
        continue;  // damaged line
      }
    }
  }

  std::filesystem::path screens_path_;
  std::filesystem::path log_path_;
  std::vector<ScreenRecord> screens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, Verdict> latest_;
  std::size_t log_lines_ = 0;
  mutable std::shared_mutex mu_;
};

struct ReviewServerOptions {
  std::optional<std::string> token;  // required in X-Review-Token when set
  std::string cors_origin;           // Access-Control-Allow-Origin, empty for none
  std::size_t compact_every = 1000;  // compact after this many log lines, 0 to disable
  std::size_t max_page = 500;
};

/// HTTP front end for a ReviewStore. A null store answers 503 everywhere but /healthz.
class ReviewServer {
 public:
  ReviewServer(ReviewStore* store, ReviewServerOptions opt) : store_(store), opt_(std::move(opt)) { routes(); }

  bool bind(const std::string& host, int port) {
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
      return port_ > 0;
    }
    port_ = port;
    return server_.bind_to_port(host, port);
  }
  void run() { server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }
  [[nodiscard]] int port() const { return port_; }

 private:
  static void send_json(httplib::Response& res, int status, const nlohmann::json& j) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }
  static void send_error(httplib::Response& res, int status, Errc code, const std::string& msg) {
    send_json(res, status, {{"error", to_string(code)}, {"message", msg}});
  }

  bool gate(const httplib::Request& req, httplib::Response& res) const {
    if (opt_.token && req.get_header_value("X-Review-Token") != *opt_.token) {
      send_error(res, 401, Errc::AuthError, "missing or wrong X-Review-Token");
      return false;
    }
    if (!store_) {
      send_error(res, 503, Errc::IoFailure, "store unavailable");
      return false;
    }
    return true;
  }

  nlohmann::json element_view(const ScreenRecord& s, const ElementRecord& e) const {
    const auto r = to_pixel_rect(e.box, s.dims);
    const auto v = store_->verdict(s.screen_id, e.element_id);
    nlohmann::json j = {{"element_id", e.element_id},
                        {"box", box_to_json(e.box)},
                        {"pixel_rect", {r.x0, r.y0, r.x1, r.y1}},
                        {"kind", to_string(e.kind)},
                        {"decision", v ? nlohmann::json(to_string(v->decision)) : nlohmann::json(nullptr)}};
    if (v) j["reviewer"] = v->reviewer;
    return j;
  }

  nlohmann::json progress_json() const {
    const auto p = store_->progress();
    return {{"screens_total", p.screens_total},
            {"screens_reviewed", p.screens_reviewed},
            {"elements_total", p.elements_total},
            {"elements_reviewed", p.elements_reviewed}};
  }

  void routes() {
    server_.set_post_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      if (!opt_.cors_origin.empty()) {
        res.set_header("Access-Control-Allow-Origin", opt_.cors_origin);
        res.set_header("Access-Control-Allow-Headers", "Content-Type, X-Review-Token");
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      }
    });
    server_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server_.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
      if (!store_) return send_json(res, 503, {{"status", "unavailable"}});
      send_json(res, 200, {{"status", "ok"}, {"screens", store_->screens().size()}});
    });

    server_.Get("/screens", [this](const httplib::Request& req, httplib::Response& res) {
      if (!gate(req, res)) return;
      std::size_t offset = 0, limit = 50;
      try {
        if (req.has_param("offset")) offset = std::stoul(req.get_param_value("offset"));
        if (req.has_param("limit")) limit = std::stoul(req.get_param_value("limit"));
      } catch (const std::exception&) {
        return send_error(res, 400, Errc::InvalidArgument, "offset and limit must be integers");
      }
      limit = std::min(limit, opt_.max_page);
      const auto& all = store_->screens();
      nlohmann::json items = nlohmann::json::array();
      for (std::size_t i = offset; i < all.size() && i < offset + limit; ++i) {
        const auto reviewed = store_->reviewed_elements(all[i]);
        items.push_back({{"screen_id", all[i].screen_id},
                         {"elements", all[i].elements.size()},
                         {"reviewed_elements", reviewed},
                         {"reviewed", reviewed == all[i].elements.size()}});
      }
      send_json(res, 200, {{"total", all.size()}, {"offset", offset}, {"limit", limit},
                           {"items", items}, {"progress", progress_json()}});
    });

    server_.Get(R"(/screens/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      if (!gate(req, res)) return;
      const auto* s = store_->find(req.matches[1]);
      if (!s) return send_error(res, 404, Errc::UnknownRecordId, "unknown screen");
      nlohmann::json els = nlohmann::json::array();
      for (const auto& e : s->elements) els.push_back(element_view(*s, e));
      nlohmann::json out = {{"screen_id", s->screen_id},
                            {"image_url", "/screens/" + s->screen_id + "/image"},
                            {"dims", {{"w", s->dims.w}, {"h", s->dims.h}}},
                            {"elements", els}};
      // ?inline_image=1 embeds the PNG bytes as base64.
      if (req.get_param_value("inline_image") == "1") {
        const auto path = store_->screens_path().parent_path() / s->image;
        out["image_base64"] = std::filesystem::exists(path)
                                  ? nlohmann::json(httplib::detail::base64_encode(read_text_file(path)))
                                  : nlohmann::json(nullptr);
      }
      send_json(res, 200, out);
    });

    server_.Get(R"(/screens/([^/]+)/image)", [this](const httplib::Request& req, httplib::Response& res) {
      if (!gate(req, res)) return;
      const auto* s = store_->find(req.matches[1]);
      if (!s) return send_error(res, 404, Errc::UnknownRecordId, "unknown screen");
      const auto path = store_->screens_path().parent_path() / s->image;
      if (s->image.empty() || !std::filesystem::exists(path)) {
        return send_error(res, 404, Errc::MissingImage, "image not found");
      }
      res.set_content(read_text_file(path), "image/png");
    });

    server_.Post(R"(/screens/([^/]+)/elements/([^/]+)/verdict)",
                 [this](const httplib::Request& req, httplib::Response& res) {
      if (!gate(req, res)) return;
      const std::string sid = req.matches[1], eid = req.matches[2];
      const auto* s = store_->find(sid);
      if (!s) return send_error(res, 404, Errc::UnknownRecordId, "unknown screen");
      Verdict v{sid, eid, Decision::Keep, "", ""};
      try {
        const auto body = nlohmann::json::parse(req.body);
        v.decision = decision_from_string(body.at("decision").get<std::string>());
        v.reviewer = body.value("reviewer", "");
      } catch (const std::exception& e) {
        return send_error(res, 409, Errc::SchemaError, std::string("malformed verdict: ") + e.what());
      }
      try {
        store_->record(v);
        if (opt_.compact_every && store_->log_lines() >= opt_.compact_every) store_->compact();
      } catch (const Error& e) {
        if (e.code() == Errc::UnknownRecordId) return send_error(res, 404, e.code(), e.what());
        return send_error(res, 503, e.code(), e.what());
      }
      send_json(res, 200, element_view(*s, *std::find_if(s->elements.begin(), s->elements.end(),
                                                         [&](const auto& e) { return e.element_id == eid; })));
    });

    server_.Get("/export", [this](const httplib::Request& req, httplib::Response& res) {
      if (!gate(req, res)) return;
      res.set_content(store_->export_jsonl(), "application/x-ndjson");
    });
  }

  ReviewStore* store_;
  ReviewServerOptions opt_;
  httplib::Server server_;
  int port_ = 0;
};

}  // namespace gground
