#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace itot {

/// Machine-readable failure categories shared by every module.
enum class Errc {
  invalid_settings,
  empty_main_prompt,
  unknown_parent,
  unknown_node,
  parent_already_expanded,
  node_is_leaf,
  invalid_layer,
  invalid_tree,
  parse_failure,
  all_votes_invalid,
  precondition,
  provider_unavailable,
  auth_failure,
  timeout,
  fixture_miss,
  generation_failed,
  evaluation_failed,
  parent_not_expanded,
  empty_text,
  storage_io,
  not_found,
  schema_mismatch,
  settings_immutable,
  expansion_in_progress,
  invalid_request,
  bind_failure,
  config_invalid,
  shutting_down,
};

constexpr std::string_view to_token(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_settings: return "invalid-settings";
    case Errc::empty_main_prompt: return "empty-main-prompt";
    case Errc::unknown_parent: return "unknown-parent";
    case Errc::unknown_node: return "unknown-node";
    case Errc::parent_already_expanded: return "parent-already-expanded";
    case Errc::node_is_leaf: return "node-is-leaf";
    case Errc::invalid_layer: return "invalid-layer";
    case Errc::invalid_tree: return "invalid-tree";
    case Errc::parse_failure: return "parse-failure";
    case Errc::all_votes_invalid: return "all-votes-invalid";
    case Errc::precondition: return "precondition";
    case Errc::provider_unavailable: return "provider-unavailable";
    case Errc::auth_failure: return "auth-failure";
    case Errc::timeout: return "timeout";
    case Errc::fixture_miss: return "fixture-miss";
    case Errc::generation_failed: return "generation-failed";
    case Errc::evaluation_failed: return "evaluation-failed";
    case Errc::parent_not_expanded: return "parent-not-expanded";
    case Errc::empty_text: return "empty-text";
    case Errc::storage_io: return "storage-io";
    case Errc::not_found: return "not-found";
    case Errc::schema_mismatch: return "schema-mismatch";
    case Errc::settings_immutable: return "settings-immutable";
    case Errc::expansion_in_progress: return "expansion-in-progress";
    case Errc::invalid_request: return "invalid-request";
    case Errc::bind_failure: return "bind-failure";
    case Errc::config_invalid: return "config-invalid";
    case Errc::shutting_down: return "shutting-down";
  }
  return "unknown";
}

inline constexpr Errc kLastErrc = Errc::shutting_down;

inline std::optional<Errc> errc_from_token(std::string_view token) noexcept {
  for (int i = 0; i <= static_cast<int>(kLastErrc); ++i) {
    if (to_token(static_cast<Errc>(i)) == token) return static_cast<Errc>(i);
  }
  return std::nullopt;
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(std::string(to_token(code)) + ": " + message), code_(code), detail_(message) {}

  Errc code() const noexcept { return code_; }
  std::string_view token() const noexcept { return to_token(code_); }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

[[noreturn]] inline void fail(Errc code, const std::string& message) { throw Error(code, message); }

inline void require(bool condition, Errc code, const std::string& message) {
  if (!condition) fail(code, message);
}

/// Rebuilds an error from its "<token>: <message>" text form; unknown tokens become `fallback`.
inline Error error_from_text(const std::string& text, Errc fallback) {
  auto colon = text.find(": ");
  if (colon != std::string::npos) {
    if (auto code = errc_from_token(std::string_view(text).substr(0, colon))) return Error(*code, text.substr(colon + 2));
  }
  return Error(fallback, text);
}

}  // namespace itot
