#pragma once

#include <cstdlib>
#include <functional>
#include <iostream>
#include <mutex>
#include <string>
#include <string_view>

namespace itot {

enum class LogLevel { debug, info, warn, error };

constexpr std::string_view to_string(LogLevel l) {
  switch (l) {
    case LogLevel::debug: return "debug";
    case LogLevel::info: return "info";
    case LogLevel::warn: return "warn";
    case LogLevel::error: return "error";
  }
  return "info";
}

using LogSink = std::function<void(LogLevel, std::string_view)>;

inline LogSink null_log() {
  return [](LogLevel, std::string_view) {};
}

inline LogSink stderr_log(LogLevel min_level = LogLevel::info) {
  return [min_level](LogLevel level, std::string_view msg) {
    if (level < min_level) return;
    static std::mutex mu;
    std::lock_guard lock(mu);
    std::cerr << "[itot " << to_string(level) << "] " << msg << '\n';
  };
}

/// Warnings always; everything when ITOT_LOG=debug.
inline LogSink default_log() {
  const char* env = std::getenv("ITOT_LOG");
  if (env != nullptr && std::string_view(env) == "debug") return stderr_log(LogLevel::debug);
  return stderr_log(LogLevel::warn);
}

/// Replaces every occurrence of `secret` with "***".
inline std::string redact(std::string text, std::string_view secret) {
  if (secret.empty()) return text;
  std::size_t pos = 0;
  while ((pos = text.find(secret, pos)) != std::string::npos) {
    text.replace(pos, secret.size(), "***");
    pos += 3;
  }
  return text;
}

}  // namespace itot
