#pragma once

// Prompt assembly and output parsing.
//
// Output grammars expected from the model (normative for prompt authors):
//   generation (propose)   one line per thought:   "1. <thought>" or "1) <thought>"
//   generation (sample)    the whole reply is one thought
//   individual evaluation  a line containing        "Score: <integer 1-10>"
//   comparative evaluation a line containing        "Best: <candidate number>"  (1-based)

#include <algorithm>
#include <climits>
#include <map>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "itot/core.hpp"
#include "itot/prompt_defaults.hpp"

namespace itot::prompts {

enum class Role { system, user, assistant };

constexpr std::string_view to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

struct Message {
  Role role = Role::user;
  std::string content;

  bool operator==(const Message&) const = default;
};

/// Chat transcript sent to a provider; first message is always the system message.
using MessageSequence = std::vector<Message>;

inline constexpr std::string_view kExampleSlot = "{example_prompt}";
inline constexpr std::string_view kCriteriaSlot = "{evaluation_prompt}";

inline constexpr const char* kGenerationSystemTemplate =
    "You are solving a problem by exploring a tree of thoughts. A thought is one coherent intermediate "
    "step toward the solution. You will be given the task and the chain of thoughts chosen so far, and "
    "you will be asked for possible next thoughts. Every next thought must continue the chain directly, "
    "must not repeat an earlier step, and must fit on a single line.\n"
    "\n"
    "Here is an example of a successful chain of thoughts:\n"
    "{example_prompt}";

inline constexpr const char* kEvaluationSystemTemplate =
    "You are judging candidate next thoughts for a step-by-step solution that is being built as a tree "
    "of thoughts. Judge the candidates by these criteria:\n"
    "{evaluation_prompt}";

namespace detail {

inline std::string task_and_path(const std::vector<std::string>& path_texts) {
  std::string out = "Task: " + path_texts.front() + "\n\nThoughts so far:\n";
  if (path_texts.size() == 1) {
    out += "(none yet)\n";
  } else {
    for (std::size_t i = 1; i < path_texts.size(); ++i) {
      out += "Step " + std::to_string(i) + ": " + text::single_line(path_texts[i]) + "\n";
    }
  }
  return out;
}

inline std::string generation_system(const PromptBundle& bundle) {
  auto example = bundle.example_prompt.value_or(default_prompts().example_prompt);
  return text::replace_all(kGenerationSystemTemplate, kExampleSlot, example);
}

inline std::string evaluation_system(const PromptBundle& bundle) {
  auto criteria = bundle.evaluation_prompt.value_or(default_prompts().evaluation_prompt);
  return text::replace_all(kEvaluationSystemTemplate, kCriteriaSlot, criteria);
}

}  // namespace detail

/// Messages for one expansion's generation step. `propose` yields a single sequence asking for a
/// numbered list of k thoughts; `sample` yields k identical single-thought sequences.
inline std::vector<MessageSequence> build_generation_prompt(const PromptBundle& bundle,
                                                            const std::vector<std::string>& path_texts,
                                                            GenerationMethod method, int k) {
  require(k >= 1, Errc::precondition, "k must be >= 1");
  require(!path_texts.empty(), Errc::precondition, "path must contain at least the task");
  const auto system = detail::generation_system(bundle);
  auto user = detail::task_and_path(path_texts) + "\n";
  if (method == GenerationMethod::propose) {
    user += "Propose exactly " + std::to_string(k) +
            " different possible next thoughts. Write them as a numbered list with one thought per line, "
            "numbered from \"1. \" to \"" +
            std::to_string(k) + ". \", and write nothing else.";
    return {MessageSequence{{Role::system, system}, {Role::user, user}}};
  }
  user += "Write exactly one possible next thought. Reply with that thought on a single line and nothing else.";
  return std::vector<MessageSequence>(static_cast<std::size_t>(k),
                                      MessageSequence{{Role::system, system}, {Role::user, user}});
}

/// Messages for evaluating candidates. Individual: one sequence per candidate, in order.
/// Comparative: one sequence listing every candidate; the caller repeats it once per vote.
inline std::vector<MessageSequence> build_evaluation_prompt(const PromptBundle& bundle,
                                                            const std::vector<std::string>& path_texts,
                                                            const std::vector<std::string>& candidates,
                                                            EvaluationMethod mode) {
  require(!candidates.empty(), Errc::precondition, "at least one candidate is required");
  require(!path_texts.empty(), Errc::precondition, "path must contain at least the task");
  const auto system = detail::evaluation_system(bundle);
  const auto context = detail::task_and_path(path_texts);
  std::vector<MessageSequence> out;
  if (mode == EvaluationMethod::individual) {
    for (const auto& c : candidates) {
      auto user = context + "\nCandidate next thought:\n" + text::single_line(c) +
                  "\n\nRate how good this candidate is as the next thought on a scale from 1 to 10. "
                  "End your reply with a line of the form \"Score: <integer 1-10>\".";
      out.push_back({{Role::system, system}, {Role::user, std::move(user)}});
    }
    return out;
  }
  auto user = context + "\nCandidate next thoughts:\n";
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    user += std::to_string(i + 1) + ". " + text::single_line(candidates[i]) + "\n";
  }
  user +=
      "\nChoose the single best candidate. End your reply with a line of the form \"Best: <index>\", where "
      "<index> is the number of the chosen candidate.";
  out.push_back({{Role::system, system}, {Role::user, std::move(user)}});
  return out;
}

/// Extracts thoughts from a completion. Propose: numbered lines, ordered by their number,
/// at most k. Sample: the trimmed completion is one thought.
inline std::vector<std::string> parse_thoughts(std::string_view raw, GenerationMethod method, int k) {
  if (method == GenerationMethod::sample) {
    auto t = text::trim(raw);
    require(!t.empty(), Errc::parse_failure, "empty completion");
    return {std::string(t)};
  }
  static const std::regex line_re(R"(^\s*(\d+)[.)]\s*(.+)$)");
  std::vector<std::pair<unsigned long, std::string>> numbered;
  for (auto line : text::split_lines(raw)) {
    std::string owned(line);
    std::smatch m;
    if (!std::regex_match(owned, m, line_re)) continue;
    auto body = text::trim(std::string_view(owned).substr(static_cast<std::size_t>(m.position(2))));
    if (body.empty()) continue;
    auto digits = m.str(1);
    unsigned long number = digits.size() > 9 ? ULONG_MAX : std::stoul(digits);
    numbered.emplace_back(number, std::string(body));
  }
  require(!numbered.empty(), Errc::parse_failure, "no numbered thoughts in completion");
  std::stable_sort(numbered.begin(), numbered.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out;
  for (auto& [_, body] : numbered) {
    if (static_cast<int>(out.size()) == k) break;
    out.push_back(std::move(body));
  }
  return out;
}

/// Inverse of parse_thoughts for propose-style output.
inline std::string render_numbered(const std::vector<std::string>& thoughts) {
  std::string out;
  for (std::size_t i = 0; i < thoughts.size(); ++i) {
    out += std::to_string(i + 1) + ". " + thoughts[i] + "\n";
  }
  return out;
}

inline constexpr int kMinScore = 1;
inline constexpr int kMaxScore = 10;
inline constexpr int kDefaultScore = 5;

struct EvaluationResult {
  EvaluationMethod mode = EvaluationMethod::individual;
  /// Indexed by candidate: a 1-10 score (individual) or a vote tally (comparative).
  std::vector<double> values;
  int votes_cast = 0;
  std::vector<std::string> raw_text;
  std::vector<std::string> warnings;
};

inline EvaluationResult parse_evaluation(const std::vector<std::string>& raws, EvaluationMethod mode,
                                         int candidate_count) {
  require(candidate_count >= 1, Errc::precondition, "candidate_count must be >= 1");
  EvaluationResult result;
  result.mode = mode;
  result.raw_text = raws;
  result.values.assign(static_cast<std::size_t>(candidate_count), 0.0);

  if (mode == EvaluationMethod::individual) {
    require(static_cast<int>(raws.size()) == candidate_count, Errc::precondition,
            "individual evaluation needs one reply per candidate");
    static const std::regex score_re(R"(Score:\s*(\d+))");
    for (std::size_t i = 0; i < raws.size(); ++i) {
      std::smatch m;
      if (std::regex_search(raws[i], m, score_re)) {
        auto digits = m.str(1);
        long v = digits.size() > 3 ? kMaxScore : std::stol(digits);
        result.values[i] = static_cast<double>(std::clamp<long>(v, kMinScore, kMaxScore));
      } else {
        result.values[i] = kDefaultScore;
        result.warnings.push_back("candidate " + std::to_string(i + 1) + ": no Score line, defaulted to " +
                                  std::to_string(kDefaultScore));
      }
    }
    result.votes_cast = candidate_count;
    return result;
  }

  require(!raws.empty(), Errc::precondition, "comparative evaluation needs at least one vote");
  static const std::regex best_re(R"(Best:\s*(\d+))");
  for (std::size_t v = 0; v < raws.size(); ++v) {
    std::smatch m;
    if (!std::regex_search(raws[v], m, best_re)) {
      result.warnings.push_back("vote " + std::to_string(v + 1) + ": no Best line, discarded");
      continue;
    }
    auto digits = m.str(1);
    long choice = digits.size() > 9 ? -1 : std::stol(digits);
    if (choice < 1 || choice > candidate_count) {
      result.warnings.push_back("vote " + std::to_string(v + 1) + ": candidate " + digits + " out of range, discarded");
      continue;
    }
    result.values[static_cast<std::size_t>(choice - 1)] += 1.0;
    ++result.votes_cast;
  }
  require(result.votes_cast > 0, Errc::all_votes_invalid, "no valid vote among " + std::to_string(raws.size()));
  return result;
}

}  // namespace itot::prompts
