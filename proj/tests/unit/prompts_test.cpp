#include <gtest/gtest.h>

#include <random>

#include "itot/prompts.hpp"
#include "support/text_gen.hpp"

namespace itot::prompts {
namespace {

PromptBundle defaults(std::string main = "Plan a 3-day Barcelona trip") {
  return resolve(PromptBundle{std::move(main), std::nullopt, std::nullopt});
}

bool contains(const std::string& hay, std::string_view needle) { return hay.find(needle) != std::string::npos; }

TEST(GenerationPrompt, ProposeSplicesExampleAndAsksForK) {
  auto seqs = build_generation_prompt(defaults(), {"Plan a 3-day Barcelona trip"}, GenerationMethod::propose, 3);
  ASSERT_EQ(seqs.size(), 1u);
  const auto& seq = seqs[0];
  ASSERT_EQ(seq.size(), 2u);
  EXPECT_EQ(seq[0].role, Role::system);
  EXPECT_TRUE(contains(seq[0].content, kDefaultExamplePrompt));
  EXPECT_FALSE(contains(seq[0].content, kExampleSlot));
  EXPECT_TRUE(contains(seq[1].content, "exactly 3"));
}

TEST(GenerationPrompt, PathTextsAppearInOrder) {
  PromptBundle bundle = resolve({"I have a 3-day in Barcelona from 9-12 July. Help me plan how to get the most out of "
                                 "this trip.",
                                 "Input: Help me plan a weekend in Frankfurt.", std::nullopt});
  std::vector<std::string> path{bundle.main_prompt, "Day 1: Sagrada Familia and the Gothic Quarter."};
  auto seqs = build_generation_prompt(bundle, path, GenerationMethod::propose, 3);
  const auto& user = seqs[0][1].content;
  auto a = user.find(path[0]);
  auto b = user.find(path[1]);
  ASSERT_NE(a, std::string::npos);
  ASSERT_NE(b, std::string::npos);
  EXPECT_LT(a, b);
}

TEST(GenerationPrompt, SampleEmitsKIdenticalSequences) {
  auto seqs = build_generation_prompt(defaults(), {"task"}, GenerationMethod::sample, 2);
  ASSERT_EQ(seqs.size(), 2u);
  EXPECT_EQ(seqs[0], seqs[1]);
  EXPECT_TRUE(contains(seqs[0][1].content, "exactly one"));
}

TEST(GenerationPrompt, IsPure) {
  auto a = build_generation_prompt(defaults(), {"task", "step"}, GenerationMethod::propose, 4);
  auto b = build_generation_prompt(defaults(), {"task", "step"}, GenerationMethod::propose, 4);
  EXPECT_EQ(a, b);
}

TEST(EvaluationPrompt, ComparativeListsCandidatesWithCriteria) {
  PromptBundle bundle = resolve({"Prove that if a graph is not connected then its complement is connected.",
                                 std::nullopt,
                                 "Steps that take a global approach as opposed to a local one should be valued more "
                                 "highly."});
  auto seqs = build_evaluation_prompt(bundle, {bundle.main_prompt}, {"Take two vertices u, v.", "Consider components."},
                                      EvaluationMethod::comparative);
  ASSERT_EQ(seqs.size(), 1u);
  EXPECT_TRUE(contains(seqs[0][0].content, "Steps that take a global approach"));
  EXPECT_TRUE(contains(seqs[0][1].content, "1. Take two vertices u, v."));
  EXPECT_TRUE(contains(seqs[0][1].content, "2. Consider components."));
  EXPECT_TRUE(contains(seqs[0][1].content, "Best: <index>"));
}

TEST(EvaluationPrompt, IndividualIsOnePerCandidate) {
  auto one = build_evaluation_prompt(defaults(), {"task"}, {"a"}, EvaluationMethod::individual);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_TRUE(contains(one[0][1].content, "Score: <integer 1-10>"));

  auto three = build_evaluation_prompt(defaults(), {"task"}, {"first", "second", "third"},
                                       EvaluationMethod::individual);
  ASSERT_EQ(three.size(), 3u);
  EXPECT_TRUE(contains(three[0][1].content, "first"));
  EXPECT_TRUE(contains(three[1][1].content, "second"));
  EXPECT_TRUE(contains(three[2][1].content, "third"));
  EXPECT_THROW(build_evaluation_prompt(defaults(), {"task"}, {}, EvaluationMethod::individual), Error);
}

TEST(ParseThoughts, NumberedList) {
  EXPECT_EQ(parse_thoughts("1. Visit Sagrada Familia\n2. Beach day", GenerationMethod::propose, 2),
            (std::vector<std::string>{"Visit Sagrada Familia", "Beach day"}));
}

TEST(ParseThoughts, TruncatesToKAndAcceptsParens) {
  EXPECT_EQ(parse_thoughts("1) A\n2) B\n3) C", GenerationMethod::propose, 2), (std::vector<std::string>{"A", "B"}));
}

TEST(ParseThoughts, OrdersByNumberAndSkipsChatter) {
  auto out = parse_thoughts("Sure! Here you go:\n  2.  second  \n1. first\n\nHope this helps.",
                            GenerationMethod::propose, 5);
  EXPECT_EQ(out, (std::vector<std::string>{"first", "second"}));
}

TEST(ParseThoughts, FailsWithoutNumbering) {
  try {
    parse_thoughts("no numbering here", GenerationMethod::propose, 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::parse_failure);
  }
}

TEST(ParseThoughts, SampleReturnsWholeCompletion) {
  EXPECT_EQ(parse_thoughts("  one whole thought\n", GenerationMethod::sample, 1),
            (std::vector<std::string>{"one whole thought"}));
  EXPECT_THROW(parse_thoughts(" \n", GenerationMethod::sample, 1), Error);
}

TEST(ParseThoughts, RenderThenParseIsIdentity) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    auto thoughts = testing::random_thoughts(rng);
    ASSERT_EQ(parse_thoughts(render_numbered(thoughts), GenerationMethod::propose, static_cast<int>(thoughts.size())),
              thoughts);
  }
}

TEST(ParseEvaluation, IndividualScores) {
  auto r = parse_evaluation({"Score: 8", "Score: 3"}, EvaluationMethod::individual, 2);
  EXPECT_EQ(r.values, (std::vector<double>{8, 3}));
  EXPECT_TRUE(r.warnings.empty());
}

TEST(ParseEvaluation, IndividualClampsAndDefaults) {
  auto r = parse_evaluation({"garbage"}, EvaluationMethod::individual, 1);
  EXPECT_EQ(r.values, std::vector<double>{5});
  EXPECT_EQ(r.warnings.size(), 1u);

  auto clamped = parse_evaluation({"Score: 0", "I think... Score: 42", "Score: 99999999999"},
                                  EvaluationMethod::individual, 3);
  EXPECT_EQ(clamped.values, (std::vector<double>{1, 10, 10}));
  EXPECT_THROW(parse_evaluation({"Score: 1"}, EvaluationMethod::individual, 2), Error);
}

TEST(ParseEvaluation, ComparativeTalliesVotes) {
  auto r = parse_evaluation({"Best: 2", "Best: 2", "Best: 1"}, EvaluationMethod::comparative, 2);
  EXPECT_EQ(r.values, (std::vector<double>{1, 2}));
  EXPECT_EQ(r.votes_cast, 3);
}

TEST(ParseEvaluation, ComparativeDiscardsInvalidVotes) {
  auto r = parse_evaluation({"Best: 3", "hmm", "Best: 0", "Best: 1"}, EvaluationMethod::comparative, 2);
  EXPECT_EQ(r.values, (std::vector<double>{1, 0}));
  EXPECT_EQ(r.votes_cast, 1);
  EXPECT_EQ(r.warnings.size(), 3u);
  try {
    parse_evaluation({"Best: 7", "none"}, EvaluationMethod::comparative, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::all_votes_invalid);
  }
}

TEST(ParseEvaluation, IndividualAlwaysYieldsOneEntryPerCandidate) {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> count(1, 9);
  for (int trial = 0; trial < 200; ++trial) {
    int m = count(rng);
    std::vector<std::string> raws;
    for (int i = 0; i < m; ++i) raws.push_back(testing::random_reply(rng));
    auto r = parse_evaluation(raws, EvaluationMethod::individual, m);
    ASSERT_EQ(static_cast<int>(r.values.size()), m);
    for (double v : r.values) {
      EXPECT_GE(v, 1);
      EXPECT_LE(v, 10);
    }
  }
}

TEST(DefaultPrompts, ShippedDefaults) {
  auto d = default_prompts();
  EXPECT_EQ(d.evaluation_prompt,
            "The quality of a thought is determined by its coherence with the thoughts in the chain before it and "
            "its contribution to solving the problem at hand.");
  EXPECT_FALSE(d.example_prompt.empty());
  auto bundle = resolve({"x", std::nullopt, std::nullopt});
  EXPECT_EQ(*bundle.example_prompt, d.example_prompt);
  EXPECT_EQ(*bundle.evaluation_prompt, d.evaluation_prompt);
}

}  // namespace
}  // namespace itot::prompts
