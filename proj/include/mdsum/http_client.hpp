#pragma once

// HTTP clients for chat-completions and embeddings endpoints, plus the
// factories that turn configs into backend objects. Kept apart from the
// pure modules so only code that talks to a server pulls in cpp-httplib.

#include <chrono>
#include <cstdlib>
#include <memory>
#include <mutex>
#include <condition_variable>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "mdsum/backend.hpp"
#include "mdsum/error.hpp"
#include "mdsum/retrieval.hpp"

namespace mdsum {

struct RetryPolicy {
  std::size_t max_retries = 3;
  std::chrono::milliseconds initial_backoff{500};
};

namespace detail {

class Semaphore {
 public:
  explicit Semaphore(std::size_t n) : free_(n) {}
  void acquire() {
    std::unique_lock lk(mu_);
    cv_.wait(lk, [&] { return free_ > 0; });
    --free_;
  }
  void release() {
    {
      std::lock_guard lk(mu_);
      ++free_;
    }
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::size_t free_;
};

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string prefix;  // path without trailing slash, may be empty
};

inline SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw config_error("base_url '" + url + "' has no scheme");
  const std::string scheme = url.substr(0, scheme_end);
  if (scheme != "http" && scheme != "https") throw config_error("unsupported URL scheme '" + scheme + "'");
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw config_error("https endpoints need a build with OpenSSL support");
#endif
  const auto path_start = url.find('/', scheme_end + 3);
  SplitUrl out;
  out.origin = url.substr(0, path_start);
  if (path_start != std::string::npos) out.prefix = url.substr(path_start);
  while (!out.prefix.empty() && out.prefix.back() == '/') out.prefix.pop_back();
  return out;
}

inline std::optional<std::string> read_api_key(const std::optional<std::string>& env_name) {
  if (!env_name || env_name->empty()) return std::nullopt;
  const char* v = std::getenv(env_name->c_str());
  if (!v || !*v) throw config_error("environment variable " + *env_name + " (API key) is not set");
  return std::string(v);
}

// POSTs JSON with retries on transport failures, 429 and 5xx.
class JsonEndpoint {
 public:
  JsonEndpoint(const std::string& base_url, std::optional<std::string> api_key, double timeout_seconds,
               RetryPolicy retry, std::size_t max_in_flight)
      : url_(split_url(base_url)),
        api_key_(std::move(api_key)),
        timeout_(timeout_seconds),
        retry_(retry),
        in_flight_(max_in_flight) {}

  nlohmann::json post(const std::string& path, const nlohmann::json& body) const {
    const std::string payload = body.dump();
    httplib::Headers headers;
    if (api_key_) headers.emplace("Authorization", "Bearer " + *api_key_);

    in_flight_.acquire();
    struct Release {
      Semaphore& s;
      ~Release() { s.release(); }
    } release{in_flight_};

    auto backoff = retry_.initial_backoff;
    std::string last_error;
    for (std::size_t attempt = 0;; ++attempt) {
      httplib::Client cli(url_.origin);
      const auto secs = static_cast<time_t>(timeout_);
      const auto usecs = static_cast<time_t>((timeout_ - static_cast<double>(secs)) * 1e6);
      cli.set_connection_timeout(secs, usecs);
      cli.set_read_timeout(secs, usecs);
      cli.set_write_timeout(secs, usecs);

      auto res = cli.Post(url_.prefix + path, headers, payload, "application/json");
      bool retryable = false;
      if (!res) {
        last_error = "transport error: " + httplib::to_string(res.error());
        retryable = true;
      } else if (res->status >= 200 && res->status < 300) {
        try {
          return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
          throw backend_error("malformed JSON response from " + path + ": " + e.what());
        }
      } else {
        last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
        retryable = res->status == 429 || res->status >= 500;
        if (!retryable) throw backend_error(last_error);
      }
      if (attempt >= retry_.max_retries) {
        throw backend_error(last_error + " (after " + std::to_string(attempt + 1) + " attempts)");
      }
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }

 private:
  SplitUrl url_;
  std::optional<std::string> api_key_;
  double timeout_;
  RetryPolicy retry_;
  mutable Semaphore in_flight_;
};

}  // namespace detail

// Client for POST {base_url}/chat/completions.
class HttpChatSummarizer final : public Summarizer {
 public:
  explicit HttpChatSummarizer(const BackendConfig& cfg, std::chrono::milliseconds initial_backoff =
                                                            std::chrono::milliseconds{500})
      : model_((cfg.validate(), *cfg.model_name)),
        endpoint_(*cfg.base_url, detail::read_api_key(cfg.api_key_env), cfg.timeout_seconds,
                  RetryPolicy{cfg.max_retries, initial_backoff}, cfg.max_in_flight) {}

  static nlohmann::json request_body(const std::string& model, const SummarizeRequest& req) {
    return {{"model", model},
            {"messages", nlohmann::json::array({{{"role", "user"}, {"content", render_prompt(req)}}})},
            {"temperature", req.temperature},
            {"max_tokens", req.max_tokens}};
  }

  std::string summarize(const SummarizeRequest& req) const override {
    const auto resp = endpoint_.post("/chat/completions", request_body(model_, req));
    std::string text;
    try {
      const auto& content = resp.at("choices").at(0).at("message").at("content");
      if (content.is_string()) text = content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw backend_error(std::string("chat completion response lacks choices[0].message.content: ") + e.what());
    }
    if (text.empty()) throw backend_error("empty completion");
    return text;
  }

 private:
  std::string model_;
  detail::JsonEndpoint endpoint_;
};

// Client for POST {base_url}/embeddings. Returned vectors are L2-normalized.
class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(const EmbedderConfig& cfg, std::chrono::milliseconds initial_backoff =
                                                       std::chrono::milliseconds{500})
      : model_((cfg.validate(), *cfg.model_name)),
        endpoint_(*cfg.base_url, detail::read_api_key(cfg.api_key_env), cfg.timeout_seconds,
                  RetryPolicy{cfg.max_retries, initial_backoff}, 4) {}

  std::vector<Embedding> embed(const std::vector<std::string>& texts) const override {
    const auto resp = endpoint_.post("/embeddings", {{"model", model_}, {"input", texts}});
    std::vector<Embedding> out;
    try {
      const auto& data = resp.at("data");
      if (data.size() != texts.size()) {
        throw backend_error("embeddings response has " + std::to_string(data.size()) + " items for " +
                            std::to_string(texts.size()) + " inputs");
      }
      out.resize(texts.size());
      for (std::size_t i = 0; i < data.size(); ++i) {
        const std::size_t slot = data[i].contains("index") ? data[i]["index"].get<std::size_t>() : i;
        if (slot >= out.size()) throw backend_error("embeddings response index out of range");
        out[slot] = data[i].at("embedding").get<Embedding>();
        l2_normalize(out[slot]);
      }
    } catch (const nlohmann::json::exception& e) {
      throw backend_error(std::string("malformed embeddings response: ") + e.what());
    }
    return out;
  }

 private:
  std::string model_;
  detail::JsonEndpoint endpoint_;
};

inline std::unique_ptr<Summarizer> make_summarizer(const BackendConfig& cfg) {
  cfg.validate();
  switch (cfg.kind) {
    case BackendKind::http_chat: return std::make_unique<HttpChatSummarizer>(cfg);
    case BackendKind::mock_extractive: return std::make_unique<ExtractiveSummarizer>();
    case BackendKind::mock_marker_oracle: return std::make_unique<MarkerOracleSummarizer>(cfg.marker_capacity);
  }
  throw config_error("unknown backend kind");
}

inline std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& cfg) {
  cfg.validate();
  if (cfg.kind == EmbedderKind::http_embed) return std::make_unique<HttpEmbedder>(cfg);
  return std::make_unique<HashedTfidfEmbedder>(cfg.dims);
}

// One-shot convenience: build the backend described by `cfg` and run `req`.
inline std::string summarize(const BackendConfig& cfg, const SummarizeRequest& req) {
  return make_summarizer(cfg)->summarize(req);
}

inline std::vector<Embedding> embed(const EmbedderConfig& cfg, const std::vector<std::string>& texts) {
  if (texts.empty()) throw validation_error("embed: no texts");
  return make_embedder(cfg)->embed(texts);
}

}  // namespace mdsum
