#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "gground/error.hpp"
#include "gground/records.hpp"
#include "gground/refgen.hpp"

namespace gground {

struct EndpointConfig {
  std::string base_url = "https://api.openai.com";
  std::string path = "/v1/chat/completions";
  std::string auth_token_env_var = "OPENAI_API_KEY";
  std::string model_name = "gpt-4o";
  std::chrono::milliseconds timeout{60000};
  int max_retries = 3;
  std::chrono::milliseconds backoff_base{500};
  double temperature = 0.0;
};

struct EndpointResult {
  std::string text;
  int attempts = 0;
  std::vector<std::chrono::milliseconds> backoffs;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

inline std::string mime_for(const std::filesystem::path& p) {
  auto ext = p.extension().string();
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".webp") return "image/webp";
  return "image/png";
}

/// Image reference as a URL the API accepts: URIs pass through, local files
/// become base64 data URIs.
inline std::string image_url(const std::string& ref) {
  if (detail::is_uri(ref)) return ref;
  return "data:" + mime_for(ref) + ";base64," + httplib::detail::base64_encode(read_text_file(ref));
}

/// Chat-completion request body for a prompt payload.
inline nlohmann::json chat_request_body(const EndpointConfig& cfg, const PromptPayload& payload) {
  nlohmann::json content = nlohmann::json::array();
  for (const auto& part : payload.user_parts) {
    if (!part.header.empty()) content.push_back({{"type", "text"}, {"text", part.header}});
    if (part.image) {
      content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_url(*part.image)}}}});
    }
    if (!part.text.empty()) content.push_back({{"type", "text"}, {"text", part.text}});
  }
  return {{"model", cfg.model_name},
          {"temperature", cfg.temperature},
          {"messages",
           {{{"role", "system"}, {"content", payload.system_text}},
            {{"role", "user"}, {"content", std::move(content)}}}}};
}

namespace detail {

inline std::string completion_text(const std::string& body) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(Errc::ProtocolError, std::string("response is not JSON: ") + e.what());
  }
  try {
    const auto& content = j.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    std::string out;
    for (const auto& p : content) {
      if (p.value("type", "") == "text") out += p.value("text", "");
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ProtocolError, std::string("unexpected response shape: ") + e.what());
  }
}

}  // namespace detail

/// One chat completion with exponential backoff on transient failures
/// (HTTP 429, 5xx, transport errors). A Retry-After header, when present,
/// overrides the computed delay. 401/403 fail immediately.
inline EndpointResult call_endpoint(const EndpointConfig& cfg, const PromptPayload& payload,
                                    const Sleeper& sleep = real_sleep) {
  if (cfg.max_retries < 0) throw Error(Errc::InvalidConfig, "max_retries must be >= 0");
  const char* token = std::getenv(cfg.auth_token_env_var.c_str());
  if (token == nullptr || *token == '\0') {
    throw Error(Errc::AuthError, "environment variable " + cfg.auth_token_env_var + " is not set");
  }
  const std::string body = chat_request_body(cfg, payload).dump();

  httplib::Client client(cfg.base_url);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers{{"Authorization", std::string("Bearer ") + token}};

  EndpointResult result;
  Errc last = Errc::ProtocolError;
  std::string last_detail;
  for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    ++result.attempts;
    std::chrono::milliseconds delay = cfg.backoff_base * (1LL << std::min(attempt, 20));
    auto res = client.Post(cfg.path, headers, body, "application/json");
    if (!res) {
      const auto err = res.error();
      last = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                 ? Errc::Timeout
                 : Errc::ProtocolError;
      last_detail = "transport error: " + httplib::to_string(err);
    } else if (res->status == 200) {
      result.text = detail::completion_text(res->body);
      return result;
    } else if (res->status == 401 || res->status == 403) {
      throw Error(Errc::AuthError, "endpoint rejected credentials (HTTP " +
                                       std::to_string(res->status) + ")");
    } else if (res->status == 429 || res->status >= 500) {
      last = res->status == 429 ? Errc::RateLimited : Errc::ProtocolError;
      last_detail = "HTTP " + std::to_string(res->status);
      if (res->has_header("Retry-After")) {
        try {
          delay = std::chrono::milliseconds(
              static_cast<long long>(std::stod(res->get_header_value("Retry-After")) * 1000));
        } catch (const std::exception&) {
        }
      }
    } else {
      throw Error(Errc::ProtocolError, "HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    if (attempt < cfg.max_retries) {
      result.backoffs.push_back(delay);
      sleep(delay);
    }
  }
  throw Error(last, last_detail + " after " + std::to_string(result.attempts) + " attempts");
}

/// Token bucket shared by concurrent callers; `acquire` blocks until a token
/// is available.
class TokenBucket {
 public:
  TokenBucket(double rate_per_sec, double burst)
      : rate_(rate_per_sec), burst_(burst), tokens_(burst), last_(Clock::now()) {}

  void acquire() {
    if (rate_ <= 0.0) return;
    std::unique_lock lock(mu_);
    for (;;) {
      refill();
      if (tokens_ >= 1.0) {
        tokens_ -= 1.0;
        return;
      }
      const auto wait = std::chrono::duration<double>((1.0 - tokens_) / rate_);
      lock.unlock();
      std::this_thread::sleep_for(wait);
      lock.lock();
    }
  }

 private:
  using Clock = std::chrono::steady_clock;

  void refill() {
    const auto now = Clock::now();
    tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * rate_);
    last_ = now;
  }

  double rate_;
  double burst_;
  double tokens_;
  Clock::time_point last_;
  std::mutex mu_;
};

}  // namespace gground
