#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <thread>

#include "itot/error.hpp"
#include "itot/log.hpp"

namespace itot {

/// A failure worth retrying (connection loss, 5xx, 429, timeouts).
class TransientError : public Error {
 public:
  using Error::Error;
};

/// Exponential backoff: base * factor^(attempt-1), scaled by a uniform jitter in [1-jitter, 1+jitter].
struct BackoffPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base{500};
  double factor = 2.0;
  double jitter = 0.2;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline Sleeper real_sleeper() {
  return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

/// Delay after the `attempt`-th failure (1-based); `unit` in [-1, 1] selects the jitter.
inline std::chrono::milliseconds backoff_delay(const BackoffPolicy& policy, int attempt, double unit) {
  double nominal = static_cast<double>(policy.base.count()) * std::pow(policy.factor, attempt - 1);
  double scaled = nominal * (1.0 + policy.jitter * std::clamp(unit, -1.0, 1.0));
  return std::chrono::milliseconds(static_cast<long long>(std::llround(scaled)));
}

/// Runs `call` until it succeeds, a non-transient error occurs, or attempts run out.
template <class Call>
auto with_retry(Call&& call, const BackoffPolicy& policy, const Sleeper& sleep, std::mt19937_64& rng,
                const LogSink& log, std::string_view what) -> decltype(call()) {
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (int attempt = 1;; ++attempt) {
    try {
      return call();
    } catch (const TransientError& e) {
      if (attempt >= policy.max_attempts) {
        log(LogLevel::warn, std::string(what) + " failed after " + std::to_string(attempt) + " attempts: " + e.what());
        throw Error(e.code(), e.detail() + " (after " + std::to_string(attempt) + " attempts)");
      }
      auto delay = backoff_delay(policy, attempt, unit(rng));
      log(LogLevel::info, std::string(what) + " attempt " + std::to_string(attempt) + " failed (" + e.what() +
                              "), retrying in " + std::to_string(delay.count()) + " ms");
      sleep(delay);
    }
  }
}

}  // namespace itot
