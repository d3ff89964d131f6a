#pragma once

#include <string>
#include <vector>

#include "itot/serialize.hpp"

namespace itot {

/// A ready-to-use task: prompts plus the settings to start it with.
struct ExampleTask {
  std::string title;
  PromptBundle prompts;
  TreeSettings settings;
  DynamicSettings dynamic;
};

namespace examples_detail {

inline constexpr const char* kSteps =
    "Input: Show that the sum of all degrees of a graph is even.\n"
    "Step 1: Take the sum over all degrees.\n"
    "Step 2: Notice that this some counts every edge in the graph twice.\n"
    "Step 3: Thus, this sum is two times the number of edges in the graph.\n"
    "Step 4: Hence the sum of all degrees is even.";

inline constexpr const char* kCoherence = prompts::kDefaultEvaluationPrompt;

inline constexpr const char* kComplementProof =
    "Prove that if a graph is not connected then its complement is connected.";

}  // namespace examples_detail

inline std::vector<ExampleTask> example_tasks() {
  using namespace examples_detail;
  std::vector<ExampleTask> out;
  out.push_back({"Vacation planning",
                 {"I have a 3-day in Barcelona from 9-12 July. Help me plan how to get the most out of this trip.",
                  "Input: Help me plan a weekend in Frankfurt.\n"
                  "Day 1: Visit the Dom/R\xC3\xB6mer area and enjoy a cozy walk in Oldtown. Make sure you walk across "
                  "the main and if the weather is good even try stand-up paddling.\n"
                  "Day 2: Try out the famous Apfelwein (\xC3\x84ppler) in the old Sachenhaus district. If you're into "
                  "shopping then visit the Zeil.",
                  kCoherence},
                 {},
                 {}});
  out.push_back({"Graph proof", {kComplementProof, kSteps, kCoherence}, {}, {}});
  out.push_back({"Graph proof (global steps)",
                 {kComplementProof, kSteps,
                  "Steps that take a global approach as opposed to a local one should be valued more highly."},
                 {},
                 {}});

  ExampleTask arithmetic{"Make 24",
                         {"Use the numbers 4 5 6 10 and the operations + - * / to obtain 24. Use every number "
                          "exactly once.",
                          "Input: 1 2 3 4\n"
                          "Step 1: 1 * 2 = 2 (left: 2 3 4)\n"
                          "Step 2: 2 * 3 = 6 (left: 4 6)\n"
                          "Step 3: 4 * 6 = 24 (left: 24)\n"
                          "Answer: (1 * 2) * 3 * 4 = 24",
                          "A step is good when the numbers left can still be combined into 24. A step after which "
                          "24 is out of reach is worthless."},
                         {},
                         {}};
  arithmetic.settings.temperature = 0.3;
  arithmetic.settings.grouping_method = GroupingMethod::none;
  arithmetic.dynamic = {8, 3};
  out.push_back(std::move(arithmetic));
  return out;
}

inline nlohmann::json to_json(const ExampleTask& t) {
  return {{"title", t.title},
          {"main_prompt", t.prompts.main_prompt},
          {"example_prompt", t.prompts.example_prompt.value_or("")},
          {"evaluation_prompt", t.prompts.evaluation_prompt.value_or("")},
          {"settings", to_json(t.settings)},
          {"dynamic", to_json(t.dynamic)}};
}

}  // namespace itot
