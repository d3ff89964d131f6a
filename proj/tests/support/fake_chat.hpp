#pragma once

#include <atomic>
#include <functional>
#include <mutex>
#include <string>
#include <vector>

#include "itot/providers.hpp"

namespace itot::testing {

/// Chat model answering through a callback; records every request it sees.
class LambdaChat final : public providers::ChatModel {
 public:
  using Reply = std::function<std::vector<std::string>(const providers::CompletionRequest&)>;

  explicit LambdaChat(Reply reply) : reply_(std::move(reply)) {}

  std::vector<std::string> complete(const providers::CompletionRequest& req) override {
    providers::validate(req);
    {
      std::lock_guard lock(mu_);
      seen_.push_back(req);
    }
    return reply_(req);
  }

  std::vector<providers::CompletionRequest> seen() const {
    std::lock_guard lock(mu_);
    return seen_;
  }

  std::vector<std::string> tags() const {
    std::vector<std::string> out;
    for (const auto& r : seen()) out.push_back(r.call_tag);
    return out;
  }

 private:
  Reply reply_;
  mutable std::mutex mu_;
  std::vector<providers::CompletionRequest> seen_;
};

inline bool starts_with(const std::string& s, std::string_view prefix) { return s.rfind(prefix, 0) == 0; }

/// The candidate text inside an individual evaluation request.
inline std::string candidate_of(const providers::CompletionRequest& req) {
  const auto& user = req.messages.back().content;
  const std::string marker = "Candidate next thought:\n";
  auto pos = user.find(marker);
  if (pos == std::string::npos) return {};
  auto start = pos + marker.size();
  return user.substr(start, user.find('\n', start) - start);
}

/// The last "Step i:" line of the path in a request.
inline std::string last_step(const providers::CompletionRequest& req) {
  const auto& user = req.messages.back().content;
  auto pos = user.rfind("Step ");
  if (pos == std::string::npos) return "(root)";
  auto colon = user.find(": ", pos);
  auto end = user.find('\n', colon);
  return user.substr(colon + 2, end - colon - 2);
}

inline std::string numbered(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += std::to_string(i + 1) + ". " + items[i] + "\n";
  return out;
}

}  // namespace itot::testing
