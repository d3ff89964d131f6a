#pragma once

// REST surface over TreeService plus a streamed event feed per expansion.

#include <atomic>
#include <deque>
#include <thread>

#include "httplib.h"
#include "itot/api_schema.hpp"
#include "itot/http_providers.hpp"
#include "itot/service.hpp"

namespace itot::api {

struct ApiError {
  std::string code;
  std::string message;
  int http_status = 500;
};

inline int http_status(Errc code) {
  switch (code) {
    case Errc::not_found:
    case Errc::unknown_node:
    case Errc::unknown_parent:
      return 404;
    case Errc::settings_immutable:
    case Errc::expansion_in_progress:
    case Errc::parent_already_expanded:
    case Errc::parent_not_expanded:
    case Errc::node_is_leaf:
      return 409;
    case Errc::invalid_settings:
    case Errc::empty_main_prompt:
    case Errc::empty_text:
    case Errc::invalid_request:
    case Errc::invalid_layer:
    case Errc::precondition:
      return 400;
    case Errc::provider_unavailable:
    case Errc::auth_failure:
    case Errc::fixture_miss:
    case Errc::generation_failed:
    case Errc::evaluation_failed:
    case Errc::parse_failure:
    case Errc::all_votes_invalid:
      return 502;
    case Errc::timeout:
      return 504;
    case Errc::shutting_down:
      return 503;
    case Errc::invalid_tree:
    case Errc::storage_io:
    case Errc::schema_mismatch:
    case Errc::bind_failure:
    case Errc::config_invalid:
      return 500;
  }
  return 500;
}

inline ApiError to_api_error(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    return {std::string(err->token()), err->detail(), http_status(err->code())};
  }
  return {"internal", e.what(), 500};
}

inline nlohmann::json to_json(const ApiError& e) { return {{"error", {{"code", e.code}, {"message", e.message}}}}; }

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::size_t idempotency_capacity = 1024;
  std::chrono::milliseconds stream_poll{200};
};

/// ITOT_PORT (default 8080) and ITOT_HOST.
inline ServerConfig server_config_from_environment() {
  ServerConfig c;
  c.host = providers::detail::env_or("ITOT_HOST", c.host);
  auto port = providers::detail::env_or("ITOT_PORT");
  if (!port.empty()) {
    try {
      std::size_t used = 0;
      c.port = std::stoi(port, &used);
      require(used == port.size() && c.port >= 0 && c.port <= 65535, Errc::config_invalid, "");
    } catch (const std::exception&) {
      fail(Errc::config_invalid, "ITOT_PORT must be a port number, got '" + port + "'");
    }
  }
  return c;
}

/// Fixture mode when ITOT_FAKE_PROVIDERS=1 (fixtures read from ITOT_FIXTURES), real providers otherwise.
inline providers::Providers providers_for_environment() {
  if (providers::detail::env_or("ITOT_FAKE_PROVIDERS") == "1") {
    auto path = providers::detail::env_or("ITOT_FIXTURES");
    require(!path.empty(), Errc::config_invalid, "ITOT_FAKE_PROVIDERS=1 needs ITOT_FIXTURES=<fixture file>");
    return providers::scripted_provider(providers::load_fixtures(path));
  }
  return providers::providers_from_environment();
}

/// Remembers responses to mutations by client-supplied Idempotency-Key so a retried request
/// replays the first answer instead of acting twice.
class IdempotencyCache {
 public:
  struct Stored {
    int status;
    std::string body;
  };

  explicit IdempotencyCache(std::size_t capacity) : capacity_(capacity) {}

  template <class F>
  Stored run(const std::string& key, F&& handler) {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return !pending_.contains(key); });
    if (auto it = done_.find(key); it != done_.end()) return it->second;
    pending_.insert(key);
    lock.unlock();

    Stored result;
    try {
      result = handler();
    } catch (...) {
      lock.lock();
      pending_.erase(key);
      cv_.notify_all();
      throw;
    }

    lock.lock();
    pending_.erase(key);
    // Server-side failures are not remembered: a retry should get another attempt.
    if (result.status < 500) {
      done_[key] = result;
      order_.push_back(key);
      while (order_.size() > capacity_) {
        done_.erase(order_.front());
        order_.pop_front();
      }
    }
    cv_.notify_all();
    return result;
  }

 private:
  std::size_t capacity_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::set<std::string> pending_;
  std::map<std::string, Stored> done_;
  std::deque<std::string> order_;
};

inline std::string sse_record(const engine::StatusEvent& e) {
  return "id: " + std::to_string(e.sequence_no) + "\nevent: " + std::string(to_string(e.phase)) +
         "\ndata: " + service::to_json(e).dump() + "\n\n";
}

class ApiServer {
 public:
  ApiServer(std::shared_ptr<service::TreeService> service, ServerConfig config = {}, LogSink log = default_log())
      : service_(std::move(service)), config_(std::move(config)), log_(std::move(log)),
        idempotency_(config_.idempotency_capacity) {
    // Without SO_REUSEPORT a port held by another server is reported as a bind failure.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
    });
    routes();
  }

  ApiServer(const ApiServer&) = delete;
  ApiServer& operator=(const ApiServer&) = delete;
  ~ApiServer() { stop(); }

  /// Binds and serves on a background thread; returns the bound port.
  int start() {
    if (config_.port == 0) {
      port_ = server_.bind_to_any_port(config_.host);
    } else {
      port_ = server_.bind_to_port(config_.host, config_.port) ? config_.port : -1;
    }
    require(port_ > 0, Errc::bind_failure,
            "cannot bind " + config_.host + ":" + std::to_string(config_.port));
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    log_(LogLevel::info, "listening on http://" + config_.host + ":" + std::to_string(port_));
    return port_;
  }

  int port() const { return port_; }

  /// Lets running expansions finish, closes their event streams, then stops listening.
  void stop() {
    if (stopped_.exchange(true)) return;
    service_->shutdown();
    stopping_ = true;
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

 private:
  using Handler = std::function<std::pair<int, nlohmann::json>(const httplib::Request&)>;

  static void send(httplib::Response& res, int status, const std::string& body) {
    res.status = status;
    res.set_content(body, "application/json");
  }

  void guarded(const httplib::Request& req, httplib::Response& res, const Handler& handler) {
    try {
      auto [status, body] = handler(req);
      send(res, status, body.dump());
    } catch (const std::exception& e) {
      auto err = to_api_error(e);
      if (err.http_status >= 500) log_(LogLevel::error, req.method + " " + req.path + ": " + e.what());
      send(res, err.http_status, to_json(err).dump());
    }
  }

  /// Mutations honour Idempotency-Key.
  void mutation(const httplib::Request& req, httplib::Response& res, const Handler& handler) {
    auto key = req.get_header_value("Idempotency-Key");
    if (key.empty()) return guarded(req, res, handler);
    auto stored = idempotency_.run(req.method + " " + req.path + " " + key, [&] {
      httplib::Response inner;
      guarded(req, inner, handler);
      return IdempotencyCache::Stored{inner.status, inner.body};
    });
    send(res, stored.status, stored.body);
  }

  static nlohmann::json body_json(const httplib::Request& req) {
    if (req.body.empty()) return nlohmann::json::object();
    try {
      return nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception&) {
      fail(Errc::invalid_request, "request body is not valid JSON");
    }
  }

  static NodeId node_param(const std::string& s) {
    try {
      return parse_node_id(s);
    } catch (const Error&) {
      fail(Errc::unknown_node, "no node '" + s + "'");
    }
  }

  nlohmann::json accepted(const std::string& tree_id, const std::string& expansion_id) const {
    return {{"expansion_id", expansion_id},
            {"tree_id", tree_id},
            {"events", "/api/trees/" + tree_id + "/events/" + expansion_id}};
  }

  void routes() {
    auto& svc = *service_;
    const std::string tree = "/api/trees/([A-Za-z0-9_-]+)";
    const std::string node = tree + "/nodes/([^/]+)";

    server_.Post("/api/trees", [&](const auto& req, auto& res) {
      mutation(req, res, [&](const httplib::Request& r) {
        return std::pair{201, itot::to_json(svc.create(body_json(r)))};
      });
    });
    server_.Get("/api/trees", [&](const auto& req, auto& res) {
      guarded(req, res, [&](const httplib::Request&) {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& h : svc.history()) list.push_back(store::to_json(h));
        return std::pair{200, nlohmann::json{{"trees", list}}};
      });
    });
    server_.Get(tree, [&](const auto& req, auto& res) {
      guarded(req, res, [&](const httplib::Request& r) {
        return std::pair{200, itot::to_json(svc.get(r.matches[1]))};
      });
    });
    server_.Post(node + "/expand", [&](const auto& req, auto& res) {
      mutation(req, res, [&](const httplib::Request& r) {
        auto id = svc.start_expand(r.matches[1], node_param(r.matches[2]));
        return std::pair{202, accepted(r.matches[1], id)};
      });
    });
    server_.Post(node + "/thoughts", [&](const auto& req, auto& res) {
      mutation(req, res, [&](const httplib::Request& r) {
        auto body = body_json(r);
        json_detail::Reader reader(body, Errc::invalid_request, "request");
        auto id = svc.start_add(r.matches[1], node_param(r.matches[2]), reader.get<std::string>("text"));
        return std::pair{202, accepted(r.matches[1], id)};
      });
    });
    server_.Post(node + "/toggle", [&](const auto& req, auto& res) {
      mutation(req, res, [&](const httplib::Request& r) {
        return std::pair{200, itot::to_json(svc.toggle(r.matches[1], node_param(r.matches[2])))};
      });
    });
    server_.Patch(tree + "/dynamic", [&](const auto& req, auto& res) {
      mutation(req, res, [&](const httplib::Request& r) {
        return std::pair{200, itot::to_json(svc.patch_dynamic(r.matches[1], body_json(r)))};
      });
    });
    server_.Patch(tree + "/settings", [&](const auto& req, auto& res) {
      mutation(req, res, [&](const httplib::Request& r) -> std::pair<int, nlohmann::json> {
        svc.patch_settings(r.matches[1], body_json(r));
      });
    });
    server_.Get(tree + "/events/([A-Za-z0-9_-]+)", [&](const auto& req, auto& res) { stream(req, res); });
    server_.Get("/api/examples", [&](const auto& req, auto& res) {
      guarded(req, res, [](const httplib::Request&) {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& t : example_tasks()) list.push_back(itot::to_json(t));
        return std::pair{200, nlohmann::json{{"examples", list}}};
      });
    });
    server_.Get("/api/schema", [](const auto&, auto& res) { send(res, 200, kApiSchema); });
  }

  void stream(const httplib::Request& req, httplib::Response& res) {
    std::shared_ptr<const service::EventLog> log;
    try {
      log = service_->events(req.matches[1], req.matches[2]);
    } catch (const std::exception& e) {
      auto err = to_api_error(e);
      return send(res, err.http_status, to_json(err).dump());
    }
    std::size_t next = 0;
    if (auto last = req.get_header_value("Last-Event-ID"); !last.empty()) {
      try {
        next = std::stoul(last);
      } catch (const std::exception&) {
        return send(res, 400, to_json(ApiError{"invalid-request", "Last-Event-ID must be a number", 400}).dump());
      }
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider("text/event-stream", [this, log, next](std::size_t, httplib::DataSink& sink) mutable {
      auto ev = log->wait(next, config_.stream_poll);
      if (!ev) return !stopping_.load() && sink.is_writable();
      auto record = sse_record(*ev);
      if (!sink.write(record.data(), record.size())) return false;
      ++next;
      if (service::is_terminal(ev->phase)) sink.done();
      return true;
    });
  }

  std::shared_ptr<service::TreeService> service_;
  ServerConfig config_;
  LogSink log_;
  IdempotencyCache idempotency_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = -1;
  std::atomic<bool> stopping_{false};
  std::atomic<bool> stopped_{false};
};

}  // namespace itot::api
