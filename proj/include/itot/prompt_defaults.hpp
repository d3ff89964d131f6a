#pragma once

#include <string>

namespace itot::prompts {

/// Few-shot demonstration used when a tree is created without an example prompt.
inline constexpr const char* kDefaultExamplePrompt =
    "Input: Plan a productive study afternoon for an exam on cell biology.\n"
    "Step 1: List the topics that still need review and estimate how long each one takes.\n"
    "Step 2: Order the topics so the hardest ones come first, while concentration is highest.\n"
    "Step 3: Put a short break between topics and reserve the last half hour for a practice quiz.\n"
    "Step 4: Hence the afternoon covers every open topic and ends with a check of what was learned.";

inline constexpr const char* kDefaultEvaluationPrompt =
    "The quality of a thought is determined by its coherence with the thoughts in the chain before it "
    "and its contribution to solving the problem at hand.";

struct DefaultPrompts {
  std::string example_prompt;
  std::string evaluation_prompt;
};

inline DefaultPrompts default_prompts() { return {kDefaultExamplePrompt, kDefaultEvaluationPrompt}; }

}  // namespace itot::prompts
