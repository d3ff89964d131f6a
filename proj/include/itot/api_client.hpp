#pragma once

// Blocking HTTP client for the REST API, used by the CLI's remote mode and the tests.

#include <string>
#include <vector>

#include "httplib.h"
#include "itot/service.hpp"

namespace itot::api {

struct Reply {
  int status = 0;
  nlohmann::json body;
};

struct SseRecord {
  std::string id;
  std::string event;
  std::string data;
};

/// Splits a text/event-stream body into records; comment lines are skipped.
inline std::vector<SseRecord> parse_sse(std::string_view stream) {
  std::vector<SseRecord> out;
  SseRecord cur;
  bool any = false;
  for (auto line : text::split_lines(stream)) {
    if (line.empty()) {
      if (any) out.push_back(std::move(cur));
      cur = {};
      any = false;
      continue;
    }
    if (line.front() == ':') continue;
    auto colon = line.find(':');
    auto field = line.substr(0, colon);
    std::string_view value = colon == std::string_view::npos ? std::string_view{} : line.substr(colon + 1);
    if (!value.empty() && value.front() == ' ') value.remove_prefix(1);
    if (field == "id") cur.id = value;
    if (field == "event") cur.event = value;
    if (field == "data") cur.data += cur.data.empty() ? std::string(value) : "\n" + std::string(value);
    any = true;
  }
  if (any) out.push_back(std::move(cur));
  return out;
}

class ApiClient {
 public:
  ApiClient(const std::string& host, int port) : client_(host, port) {
    client_.set_read_timeout(std::chrono::seconds(60));
  }

  /// http://host:port
  explicit ApiClient(const std::string& base_url) : client_(base_url) {
    client_.set_read_timeout(std::chrono::seconds(60));
  }

  Reply call(const std::string& method, const std::string& path, const nlohmann::json* body = nullptr,
             const httplib::Headers& headers = {}) {
    std::string payload = body != nullptr ? body->dump() : "";
    httplib::Result res;
    if (method == "GET") {
      res = client_.Get(path, headers);
    } else if (method == "POST") {
      res = client_.Post(path, headers, payload, "application/json");
    } else if (method == "PATCH") {
      res = client_.Patch(path, headers, payload, "application/json");
    } else {
      fail(Errc::invalid_request, "unsupported method " + method);
    }
    require(static_cast<bool>(res), Errc::provider_unavailable,
            method + " " + path + ": " + httplib::to_string(res.error()));
    Reply r{res->status, nullptr};
    if (!res->body.empty()) {
      try {
        r.body = nlohmann::json::parse(res->body);
      } catch (const nlohmann::json::exception&) {
        r.body = res->body;
      }
    }
    return r;
  }

  Reply get(const std::string& path) { return call("GET", path); }
  Reply post(const std::string& path, const nlohmann::json& body, const httplib::Headers& h = {}) {
    return call("POST", path, &body, h);
  }
  Reply patch(const std::string& path, const nlohmann::json& body, const httplib::Headers& h = {}) {
    return call("PATCH", path, &body, h);
  }

  /// Reads an expansion's event stream until the server closes it.
  std::vector<SseRecord> stream(const std::string& path, const std::string& last_event_id = {}) {
    httplib::Headers headers;
    if (!last_event_id.empty()) headers.emplace("Last-Event-ID", last_event_id);
    std::string raw;
    auto res = client_.Get(path, headers, [&](const char* data, std::size_t n) {
      raw.append(data, n);
      return true;
    });
    require(static_cast<bool>(res), Errc::provider_unavailable, "GET " + path + ": " + httplib::to_string(res.error()));
    require(res->status == 200, Errc::not_found, "GET " + path + " returned " + std::to_string(res->status));
    return parse_sse(raw);
  }

  std::vector<engine::StatusEvent> events(const std::string& tree_id, const std::string& expansion_id,
                                          const std::string& last_event_id = {}) {
    std::vector<engine::StatusEvent> out;
    for (const auto& r : stream("/api/trees/" + tree_id + "/events/" + expansion_id, last_event_id)) {
      out.push_back(service::event_from_json(nlohmann::json::parse(r.data)));
    }
    return out;
  }

 private:
  httplib::Client client_;
};

/// Raises the server's error when a reply is not the expected status.
inline const nlohmann::json& expect_status(const Reply& r, int status) {
  if (r.status == status) return r.body;
  if (r.body.is_object() && r.body.contains("error")) {
    auto code = r.body["error"].value("code", "");
    auto message = r.body["error"].value("message", "");
    throw error_from_text(code + ": " + message, Errc::invalid_request);
  }
  fail(Errc::invalid_request, "unexpected HTTP status " + std::to_string(r.status));
}

}  // namespace itot::api
