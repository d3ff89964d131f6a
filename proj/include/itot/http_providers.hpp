#pragma once

// HTTP clients for the remote model services.
//
// Environment:
//   ITOT_LLM_API_KEY     bearer token for the chat service (required)
//   ITOT_LLM_ENDPOINT    chat-completions URL (default https://api.openai.com/v1/chat/completions)
//   ITOT_EMBED_ENDPOINT  embeddings URL, OpenAI-compatible {"input": [...]} -> {"data": [{"embedding": [...]}]}
//   ITOT_NLI_ENDPOINT    NLI URL, {"premise", "hypothesis"} -> {"entailment", "contradiction", "neutral"}
//
// Every call is retried with exponential backoff on transient failures and
// bounded by a per-client concurrency cap.

#include <cstdlib>
#include <memory>
#include <mutex>
#include <random>
#include <semaphore>
#include <string>
#include <vector>

#include "httplib.h"
#include "itot/log.hpp"
#include "itot/providers.hpp"
#include "itot/retry.hpp"

namespace itot::providers {

struct Endpoint {
  std::string origin;  // scheme://host[:port]
  std::string path;    // /v1/...
};

inline Endpoint parse_endpoint(const std::string& url) {
  auto scheme_end = url.find("://");
  require(scheme_end != std::string::npos, Errc::config_invalid, "endpoint '" + url + "' lacks a scheme");
  auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

struct HttpOptions {
  BackoffPolicy backoff;
  int max_concurrency = 4;
  std::chrono::milliseconds timeout{60'000};
  Sleeper sleep = real_sleeper();
  LogSink log = default_log();
  std::uint64_t jitter_seed = std::random_device{}();
};

namespace detail {

/// POSTs JSON with retry, concurrency cap and credential redaction in logs.
class JsonPoster {
 public:
  JsonPoster(std::string url, std::string api_key, HttpOptions options)
      : url_(std::move(url)),
        endpoint_(parse_endpoint(url_)),
        api_key_(std::move(api_key)),
        options_(std::move(options)),
        slots_(std::max(1, options_.max_concurrency)),
        rng_(options_.jitter_seed) {}

  nlohmann::json post(const nlohmann::json& body, std::chrono::milliseconds timeout, std::string_view what) {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<1024>& s;
      ~Release() { s.release(); }
    } release{slots_};

    std::mt19937_64 rng;
    {
      std::lock_guard lock(rng_mu_);
      rng.seed(rng_());
    }
    LogSink redacted = [this](LogLevel level, std::string_view msg) { log(level, std::string(msg)); };
    return with_retry([&] { return attempt(body, timeout, what); }, options_.backoff, options_.sleep, rng, redacted,
                      what);
  }

  const std::string& url() const { return url_; }

 private:
  nlohmann::json attempt(const nlohmann::json& body, std::chrono::milliseconds timeout, std::string_view what) {
    httplib::Client client(endpoint_.origin);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
    log(LogLevel::debug, "POST " + url_ + " (" + std::string(what) + ")" +
                             (api_key_.empty() ? "" : " Authorization: Bearer " + api_key_));

    auto res = client.Post(endpoint_.path, headers, body.dump(), "application/json");
    if (!res) {
      auto err = res.error();
      auto msg = "POST " + url_ + ": " + httplib::to_string(err);
      if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read || err == httplib::Error::Write) {
        throw TransientError(Errc::timeout, msg);
      }
      throw TransientError(Errc::provider_unavailable, msg);
    }
    log(LogLevel::debug, "POST " + url_ + " -> " + std::to_string(res->status));
    if (res->status == 401 || res->status == 403) {
      fail(Errc::auth_failure, "POST " + url_ + " rejected credentials (HTTP " + std::to_string(res->status) + ")");
    }
    if (res->status == 408) throw TransientError(Errc::timeout, "POST " + url_ + ": HTTP 408");
    if (res->status == 429 || res->status >= 500) {
      throw TransientError(Errc::provider_unavailable, "POST " + url_ + ": HTTP " + std::to_string(res->status));
    }
    if (res->status < 200 || res->status >= 300) {
      fail(Errc::provider_unavailable, "POST " + url_ + ": HTTP " + std::to_string(res->status) + " " +
                                           redact(text::utf8_prefix(res->body, 200), api_key_));
    }
    try {
      return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
      fail(Errc::provider_unavailable, "POST " + url_ + ": response is not JSON");
    }
  }

  void log(LogLevel level, const std::string& msg) const { options_.log(level, redact(msg, api_key_)); }

  std::string url_;
  Endpoint endpoint_;
  std::string api_key_;
  HttpOptions options_;
  std::counting_semaphore<1024> slots_;
  std::mutex rng_mu_;
  std::mt19937_64 rng_;
};

inline std::string env_or(const char* name, std::string fallback = {}) {
  const char* v = std::getenv(name);
  return v == nullptr ? std::move(fallback) : std::string(v);
}

}  // namespace detail

inline constexpr const char* kDefaultChatEndpoint = "https://api.openai.com/v1/chat/completions";

/// OpenAI-compatible chat-completions client.
class HttpChatModel final : public ChatModel {
 public:
  HttpChatModel(std::string endpoint, std::string api_key, HttpOptions options = {})
      : poster_(std::move(endpoint), require_key(std::move(api_key)), std::move(options)) {}

  static std::shared_ptr<HttpChatModel> from_environment(HttpOptions options = {}) {
    return std::make_shared<HttpChatModel>(detail::env_or("ITOT_LLM_ENDPOINT", kDefaultChatEndpoint),
                                           detail::env_or("ITOT_LLM_API_KEY"), std::move(options));
  }

  std::vector<std::string> complete(const CompletionRequest& req) override {
    validate(req);
    nlohmann::json body;
    body["model"] = req.model_id;
    body["temperature"] = req.temperature;
    body["n"] = req.n;
    auto& msgs = body["messages"] = nlohmann::json::array();
    for (const auto& m : req.messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});

    auto res = poster_.post(body, req.timeout, "chat " + req.call_tag);
    std::vector<std::string> texts;
    try {
      for (const auto& choice : res.at("choices")) texts.push_back(choice.at("message").at("content").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::provider_unavailable, std::string("malformed chat response: ") + e.what());
    }
    require(static_cast<int>(texts.size()) == req.n, Errc::provider_unavailable,
            "chat service returned " + std::to_string(texts.size()) + " completions, expected " +
                std::to_string(req.n));
    return texts;
  }

 private:
  static std::string require_key(std::string key) {
    require(!key.empty(), Errc::auth_failure, "ITOT_LLM_API_KEY is not set");
    return key;
  }

  detail::JsonPoster poster_;
};

class HttpEmbedder final : public Embedder {
 public:
  HttpEmbedder(std::string endpoint, std::string api_key = {}, std::string model = {}, HttpOptions options = {})
      : poster_(std::move(endpoint), std::move(api_key), options), model_(std::move(model)), timeout_(options.timeout) {}

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
    detail::check_embed_input(texts);
    nlohmann::json body;
    body["input"] = std::vector<std::string>(texts.begin(), texts.end());
    if (!model_.empty()) body["model"] = model_;
    auto res = poster_.post(body, timeout_, "embed");
    std::vector<EmbeddingVector> out(texts.size());
    try {
      const auto& data = res.at("data");
      require(data.size() == texts.size(), Errc::provider_unavailable, "embedding count mismatch");
      for (std::size_t i = 0; i < data.size(); ++i) {
        auto idx = data[i].value("index", i);
        require(idx < out.size(), Errc::provider_unavailable, "embedding index out of range");
        out[idx].values = data[i].at("embedding").get<std::vector<double>>();
      }
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::provider_unavailable, std::string("malformed embedding response: ") + e.what());
    }
    for (const auto& v : out) {
      require(!v.values.empty() && v.dimension() == out.front().dimension(), Errc::provider_unavailable,
              "embedding dimensions differ");
      for (double x : v.values) require(std::isfinite(x), Errc::provider_unavailable, "non-finite embedding entry");
    }
    return out;
  }

 private:
  detail::JsonPoster poster_;
  std::string model_;
  std::chrono::milliseconds timeout_;
};

class HttpNli final : public NliModel {
 public:
  HttpNli(std::string endpoint, std::string api_key = {}, HttpOptions options = {})
      : poster_(std::move(endpoint), std::move(api_key), options), timeout_(options.timeout) {}

  NliVerdict nli(const std::string& premise, const std::string& hypothesis) override {
    require(!premise.empty() && !hypothesis.empty(), Errc::precondition, "NLI texts must be nonempty");
    auto res = poster_.post({{"premise", premise}, {"hypothesis", hypothesis}}, timeout_, "nli");
    NliVerdict v{premise, hypothesis};
    try {
      v.entail_prob = res.at("entailment").get<double>();
      v.contradict_prob = res.at("contradiction").get<double>();
      v.neutral_prob = res.at("neutral").get<double>();
    } catch (const nlohmann::json::exception& e) {
      fail(Errc::provider_unavailable, std::string("malformed NLI response: ") + e.what());
    }
    // Services often round to a few decimals; renormalise small drift.
    double sum = v.entail_prob + v.contradict_prob + v.neutral_prob;
    require(std::isfinite(sum) && std::abs(sum - 1.0) <= 1e-3, Errc::provider_unavailable,
            "NLI probabilities do not sum to 1");
    v.entail_prob /= sum;
    v.contradict_prob /= sum;
    v.neutral_prob = std::max(0.0, 1.0 - v.entail_prob - v.contradict_prob);
    validate(v);
    return v;
  }

 private:
  detail::JsonPoster poster_;
  std::chrono::milliseconds timeout_;
};

/// Real providers configured from ITOT_* environment variables. Embedding and NLI clients are
/// only created when their endpoint is set.
inline Providers providers_from_environment(HttpOptions options = {}) {
  Providers p;
  p.chat = HttpChatModel::from_environment(options);
  auto key = detail::env_or("ITOT_LLM_API_KEY");
  if (auto url = detail::env_or("ITOT_EMBED_ENDPOINT"); !url.empty()) {
    p.embedder = std::make_shared<HttpEmbedder>(url, key, detail::env_or("ITOT_EMBED_MODEL"), options);
  }
  if (auto url = detail::env_or("ITOT_NLI_ENDPOINT"); !url.empty()) {
    p.nli = std::make_shared<HttpNli>(url, key, options);
  }
  return p;
}

}  // namespace itot::providers
