#pragma once

#include <random>
#include <string>
#include <vector>

namespace itot::testing {

/// A single-line thought that does not start with a digit and has no surrounding whitespace.
inline std::string random_thought(std::mt19937_64& rng) {
  static constexpr std::string_view first = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ\"'(";
  static constexpr std::string_view rest = "abcdefghijklmnopqrstuvwxyz ABCDEFGHIJ0123456789.,;:!?()-'\"/&";
  std::uniform_int_distribution<std::size_t> len(0, 60);
  std::uniform_int_distribution<std::size_t> pick_first(0, first.size() - 1);
  std::uniform_int_distribution<std::size_t> pick_rest(0, rest.size() - 1);
  std::string s(1, first[pick_first(rng)]);
  for (std::size_t n = len(rng); n > 0; --n) s.push_back(rest[pick_rest(rng)]);
  while (s.back() == ' ') s.pop_back();
  return s;
}

inline std::vector<std::string> random_thoughts(std::mt19937_64& rng, int max_k = 9) {
  std::uniform_int_distribution<int> k(1, max_k);
  std::vector<std::string> out;
  for (int i = k(rng); i > 0; --i) out.push_back(random_thought(rng));
  return out;
}

/// Evaluation reply that may or may not contain a well-formed score.
inline std::string random_reply(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> kind(0, 3);
  std::uniform_int_distribution<int> value(-5, 40);
  switch (kind(rng)) {
    case 0: return "Score: " + std::to_string(value(rng));
    case 1: return random_thought(rng) + "\nScore:" + std::to_string(value(rng) < 0 ? 0 : value(rng));
    case 2: return random_thought(rng);
    default: return "score 7 maybe";
  }
}

}  // namespace itot::testing
