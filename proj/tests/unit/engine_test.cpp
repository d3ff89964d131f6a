#include <gtest/gtest.h>

#include <map>
#include <random>
#include <set>

#include "itot/engine.hpp"
#include "support/expect.hpp"
#include "support/fake_chat.hpp"

namespace itot::engine {
namespace {

using testing::LambdaChat;
using testing::starts_with;

/// Candidate texts per parent step and their 1-10 scores.
struct Script {
  std::map<std::string, std::vector<std::pair<std::string, int>>> children;
  std::vector<std::pair<std::string, int>> fallback{{"Carry on", 5}};

  std::vector<std::string> operator()(const providers::CompletionRequest& req) const {
    if (starts_with(req.call_tag, "generate")) {
      auto it = children.find(testing::last_step(req));
      const auto& list = it == children.end() ? fallback : it->second;
      std::vector<std::string> texts;
      for (const auto& [t, _] : list) texts.push_back(t);
      return {testing::numbered(texts)};
    }
    auto candidate = testing::candidate_of(req);
    for (const auto& [_, list] : children) {
      for (const auto& [t, s] : list) {
        if (t == candidate) return {"Reasoning.\nScore: " + std::to_string(s)};
      }
    }
    return {"Score: 4"};
  }
};

struct Events {
  std::vector<StatusEvent> all;
  EventSink sink() {
    return [this](const StatusEvent& e) { all.push_back(e); };
  }
  std::vector<Phase> phases() const {
    std::vector<Phase> out;
    for (const auto& e : all) out.push_back(e.phase);
    return out;
  }
};

TreeSettings settings(GroupingMethod grouping = GroupingMethod::none) {
  TreeSettings s;
  s.grouping_method = grouping;
  return s;
}

ThoughtTree fresh(TreeSettings s = settings(), DynamicSettings d = {5, 3}) {
  return new_tree({"Plan a weekend in Lisbon", std::nullopt, std::nullopt}, s, d, TreeOrigin{"t1", Timestamp{}});
}

providers::Providers with_chat(std::shared_ptr<providers::ChatModel> chat) {
  providers::Providers p;
  p.chat = std::move(chat);
  p.embedder = std::make_shared<providers::HashingEmbedder>();
  return p;
}

Script five_options() {
  Script s;
  s.children["(root)"] = {{"Book a hotel in Alfama", 6},
                          {"Take tram 28 on arrival", 9},
                          {"Visit Belem on Saturday", 8},
                          {"Eat pasteis de nata", 3},
                          {"Plan a day trip to Sintra", 7}};
  return s;
}

TEST(Select, GreedyTakesTopScoresBestFirst) {
  EXPECT_EQ(select_thoughts({0.9, 0.2, 0.5}, 2, SelectionMethod::greedy, 0), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(select_thoughts({0.5, 0.9, 0.5, 0.5}, 3, SelectionMethod::greedy, 0),
            (std::vector<std::size_t>{1, 0, 2}));
  EXPECT_EQ(select_thoughts({0.1, 0.3}, 5, SelectionMethod::greedy, 0), (std::vector<std::size_t>{1, 0}));
  EXPECT_ERRC(select_thoughts({0.1}, 0, SelectionMethod::greedy, 0), Errc::precondition);
}

TEST(Select, SampleIsSeededAndSized) {
  std::vector<double> scores{0.1, 0.2, 0.3, 0.4, 0.5};
  auto a = select_thoughts(scores, 3, SelectionMethod::sample, 99);
  EXPECT_EQ(a, select_thoughts(scores, 3, SelectionMethod::sample, 99));
  EXPECT_EQ(a.size(), 3u);
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), 3u);
  EXPECT_EQ(select_thoughts(scores, 9, SelectionMethod::sample, 1).size(), 5u);
}

TEST(Select, SampleIsUniformOverSubsets) {
  std::map<std::set<std::size_t>, int> counts;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) {
    auto pick = select_thoughts({0.4, 0.3, 0.2, 0.1}, 2, SelectionMethod::sample, static_cast<std::uint64_t>(t));
    counts[{pick.begin(), pick.end()}]++;
  }
  ASSERT_EQ(counts.size(), 6u);
  for (const auto& [subset, n] : counts) EXPECT_NEAR(n / double(trials), 1.0 / 6.0, 0.02);
}

TEST(Expand, ShowsBestThreeRankedByScore) {
  auto chat = std::make_shared<LambdaChat>(five_options());
  Events ev;
  auto [tree, result] = expand(fresh(), NodeId{0}, with_chat(chat), ev.sink());

  ASSERT_EQ(result.candidates.size(), 5u);
  ASSERT_EQ(result.displayed.size(), 3u);
  const auto& root = tree.node(NodeId{0});
  EXPECT_EQ(root.expansion_state, ExpansionState::expanded);
  ASSERT_EQ(root.children.size(), 3u);
  EXPECT_EQ(tree.node(root.children[0]).text, "Take tram 28 on arrival");
  EXPECT_EQ(tree.node(root.children[0]).rank, 1);
  EXPECT_DOUBLE_EQ(*tree.node(root.children[0]).score, 0.9);
  EXPECT_EQ(tree.node(root.children[1]).text, "Visit Belem on Saturday");
  EXPECT_EQ(tree.node(root.children[2]).text, "Plan a day trip to Sintra");
  EXPECT_EQ(tree.node(root.children[2]).rank, 3);
  EXPECT_EQ(tree.preferred_path(), (std::vector<NodeId>{NodeId{0}, root.children[0]}));
  EXPECT_EQ(tree.active_path(), std::vector<NodeId>{NodeId{0}});

  ASSERT_EQ(tree.layers().size(), 1u);
  const auto& rec = tree.layers()[0];
  EXPECT_EQ(rec.expansion_id, "t1-x1");
  EXPECT_EQ(rec.seed, layer_seed(42, 0));
  EXPECT_EQ(rec.candidates.size(), 5u);
  EXPECT_FALSE(rec.candidates[0].node.has_value());
  EXPECT_EQ(rec.candidates[1].node, root.children[0]);
  EXPECT_EQ(rec.dynamic, (DynamicSettings{5, 3}));

  EXPECT_EQ(chat->tags(), (std::vector<std::string>{"generate/0", "evaluate/0", "evaluate/1", "evaluate/2",
                                                      "evaluate/3", "evaluate/4"}));
  EXPECT_EQ(ev.phases(), (std::vector<Phase>{Phase::generating, Phase::evaluating, Phase::selecting, Phase::done}));
  for (std::size_t i = 0; i < ev.all.size(); ++i) {
    EXPECT_EQ(ev.all[i].sequence_no, static_cast<int>(i + 1));
    EXPECT_EQ(ev.all[i].expansion_id, "t1-x1");
    EXPECT_EQ(ev.all[i].tree_id, "t1");
  }
}

TEST(Expand, TwoCandidatesGreedyPutsArgmaxFirst) {
  Script s;
  s.children["(root)"] = {{"Option A", 9}, {"Option B", 1}};
  auto [tree, result] = expand(fresh(settings(), {2, 2}), NodeId{0}, with_chat(std::make_shared<LambdaChat>(s)));
  EXPECT_EQ(tree.node(result.displayed[0]).text, "Option A");
  EXPECT_EQ(tree.node(result.displayed[0]).rank, 1);
  EXPECT_EQ(tree.node(result.displayed[1]).rank, 2);
}

TEST(Expand, RanksFollowModelScoresEvenWhenTheModelIsWrong) {
  Script s;
  s.children["(root)"] = {{"Assume the graph has an isolated vertex", 8},
                          {"Split the vertices into two subgraphs and pick an edge", 6}};
  auto [tree, result] = expand(fresh(settings(), {2, 2}), NodeId{0}, with_chat(std::make_shared<LambdaChat>(s)));
  ASSERT_EQ(result.displayed.size(), 2u);
  EXPECT_EQ(tree.node(result.displayed[1]).text, "Split the vertices into two subgraphs and pick an edge");
  EXPECT_EQ(tree.node(result.displayed[1]).rank, 2);
}

TEST(Expand, GroupsNearDuplicatesAmongDisplayed) {
  Script s;
  s.children["(root)"] = {{"Visit the Belem tower", 9}, {"visit the belem tower!", 8}, {"Ride tram 28", 7},
                          {"Sleep in", 2}};
  Events ev;
  auto [tree, result] = expand(fresh(settings(GroupingMethod::embedding), {4, 3}), NodeId{0},
                               with_chat(std::make_shared<LambdaChat>(s)), ev.sink());
  ASSERT_EQ(result.groups.size(), 2u);
  EXPECT_EQ(result.groups[0].members.size(), 2u);
  EXPECT_EQ(tree.node(result.groups[0].representative).text, "Visit the Belem tower");
  EXPECT_NEAR(*result.consistency, 0.5, 1e-12);
  EXPECT_EQ(tree.node(result.displayed[0]).rank, 1);
  EXPECT_FALSE(tree.node(result.displayed[1]).rank.has_value());
  EXPECT_EQ(tree.node(result.displayed[2]).rank, 2);
  EXPECT_EQ(ev.phases(), (std::vector<Phase>{Phase::generating, Phase::evaluating, Phase::selecting,
                                             Phase::grouping, Phase::done}));
  validate(tree);
}

TEST(Expand, SampleGenerationMakesKCalls) {
  auto s = settings();
  s.generation_method = GenerationMethod::sample;
  std::atomic<int> n{0};
  auto chat = std::make_shared<LambdaChat>([&](const providers::CompletionRequest& req) -> std::vector<std::string> {
    if (starts_with(req.call_tag, "generate")) return {"Idea " + req.call_tag.substr(9)};
    ++n;
    return {"Score: 7"};
  });
  auto [tree, result] = expand(fresh(s, {4, 2}), NodeId{0}, with_chat(chat));
  EXPECT_EQ(result.candidates.size(), 4u);
  EXPECT_EQ(n.load(), 4);
  std::set<std::string> tags;
  for (const auto& t : chat->tags()) tags.insert(t);
  EXPECT_TRUE(tags.contains("generate/0") && tags.contains("generate/3"));
  EXPECT_EQ(tree.node(result.displayed[0]).text, "Idea 0");
}

TEST(Expand, DuplicateCandidatesAreDroppedWithWarning) {
  Script s;
  s.children["(root)"] = {{"Same", 5}, {"Same", 5}, {"Other", 6}};
  auto [tree, result] = expand(fresh(settings(), {3, 3}), NodeId{0}, with_chat(std::make_shared<LambdaChat>(s)));
  EXPECT_EQ(result.candidates.size(), 2u);
  EXPECT_EQ(result.displayed.size(), 2u);
  ASSERT_FALSE(result.warnings.empty());
  EXPECT_NE(result.warnings[0].find("duplicate"), std::string::npos);
  EXPECT_EQ(tree.layers()[0].warnings, result.warnings);
}

TEST(Expand, ComparativeScoresAreVoteShares) {
  auto s = settings();
  s.evaluation_method = EvaluationMethod::comparative;
  s.vote_count = 3;
  auto chat = std::make_shared<LambdaChat>([](const providers::CompletionRequest& req) -> std::vector<std::string> {
    if (starts_with(req.call_tag, "generate")) return {"1. a\n2. b\n3. c\n"};
    return {req.call_tag == "vote/2" ? "Best: 2" : "I pick\nBest: 1"};
  });
  auto [tree, result] = expand(fresh(s, {3, 3}), NodeId{0}, with_chat(chat));
  ASSERT_EQ(result.candidates.size(), 3u);
  EXPECT_NEAR(result.candidates[0].score, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(result.candidates[1].score, 1.0 / 3.0, 1e-12);
  EXPECT_DOUBLE_EQ(result.candidates[2].score, 0.0);
  double sum = 0;
  for (const auto& c : result.candidates) sum += c.score;
  EXPECT_NEAR(sum, 1.0, 1e-12);
}

TEST(Expand, AllInvalidVotesFailEvaluation) {
  auto s = settings();
  s.evaluation_method = EvaluationMethod::comparative;
  auto chat = std::make_shared<LambdaChat>([](const providers::CompletionRequest& req) -> std::vector<std::string> {
    if (starts_with(req.call_tag, "generate")) return {"1. a\n2. b\n3. c\n"};
    return {"Best: 7"};
  });
  Events ev;
  auto tree = fresh(s, {3, 3});
  EXPECT_ERRC(expand(tree, NodeId{0}, with_chat(chat), ev.sink()), Errc::evaluation_failed);
  EXPECT_EQ(ev.phases().back(), Phase::error);
}

TEST(Expand, ParseFailureIsRetriedOnce) {
  int calls = 0;
  auto chat = std::make_shared<LambdaChat>([&](const providers::CompletionRequest& req) -> std::vector<std::string> {
    if (starts_with(req.call_tag, "generate")) return {++calls == 1 ? "no list here" : "1. x\n2. y\n"};
    return {"Score: 6"};
  });
  auto [tree, result] = expand(fresh(settings(), {2, 2}), NodeId{0}, with_chat(chat));
  EXPECT_EQ(calls, 2);
  EXPECT_EQ(chat->tags()[1], "generate/0/retry");
  EXPECT_EQ(result.displayed.size(), 2u);
}

TEST(Expand, PersistentParseFailureIsGenerationFailure) {
  auto chat = std::make_shared<LambdaChat>([](const providers::CompletionRequest&) -> std::vector<std::string> {
    return {"I cannot help with that."};
  });
  Events ev;
  EXPECT_ERRC(expand(fresh(), NodeId{0}, with_chat(chat), ev.sink()), Errc::generation_failed);
  EXPECT_EQ(chat->seen().size(), 2u);
  EXPECT_EQ(ev.phases(), (std::vector<Phase>{Phase::generating, Phase::error}));
}

TEST(Expand, FailureAtAnyPhaseLeavesTreeUnchanged) {
  auto chat = std::make_shared<LambdaChat>(five_options());
  auto base = expand(fresh(settings(GroupingMethod::embedding)), NodeId{0}, with_chat(chat)).tree;
  auto target = base.node(NodeId{0}).children[0];
  const auto before = base.state();
  for (auto phase : {Phase::generating, Phase::evaluating, Phase::selecting, Phase::grouping}) {
    ExpandOptions opts;
    opts.checkpoint = [phase](Phase p) {
      if (p == phase) throw Error(Errc::provider_unavailable, "injected");
    };
    Events ev;
    EXPECT_ERRC(expand(base, target, with_chat(chat), ev.sink(), opts), Errc::provider_unavailable);
    EXPECT_EQ(ev.phases().back(), Phase::error);
    EXPECT_EQ(ev.all.back().sequence_no, static_cast<int>(ev.all.size()));
    EXPECT_EQ(base.state(), before);
  }
}

TEST(Expand, ProviderErrorsPropagate) {
  auto chat = std::make_shared<LambdaChat>([](const providers::CompletionRequest& req) -> std::vector<std::string> {
    if (starts_with(req.call_tag, "evaluate/3")) throw Error(Errc::timeout, "slow");
    if (starts_with(req.call_tag, "generate")) return {"1. a\n2. b\n3. c\n4. d\n"};
    return {"Score: 5"};
  });
  EXPECT_ERRC(expand(fresh(settings(), {4, 3}), NodeId{0}, with_chat(chat)), Errc::timeout);
  EXPECT_ERRC(expand(fresh(), NodeId{0}, providers::Providers{}), Errc::config_invalid);
}

TEST(Expand, RejectsBadParents) {
  auto chat = std::make_shared<LambdaChat>(five_options());
  auto tree = expand(fresh(), NodeId{0}, with_chat(chat)).tree;
  EXPECT_ERRC(expand(tree, NodeId{0}, with_chat(chat)), Errc::parent_already_expanded);
  EXPECT_ERRC(expand(tree, NodeId{77}, with_chat(chat)), Errc::unknown_node);
}

TEST(Expand, DeterministicForFixedProviders) {
  auto chat = std::make_shared<LambdaChat>(five_options());
  auto s = settings(GroupingMethod::embedding);
  s.selection_method = SelectionMethod::sample;
  auto a = expand(fresh(s), NodeId{0}, with_chat(chat)).tree;
  auto b = expand(fresh(s), NodeId{0}, with_chat(chat)).tree;
  EXPECT_EQ(a.state(), b.state());
}

TEST(Expand, SecondLayerUsesPathAndAdvancesActivePath) {
  Script s = five_options();
  s.children["Take tram 28 on arrival"] = {{"Get off at Graca", 8}, {"Stay on to Prazeres", 4}};
  auto chat = std::make_shared<LambdaChat>(s);
  auto t1 = expand(fresh(settings(), {5, 2}), NodeId{0}, with_chat(chat)).tree;
  auto best = t1.node(NodeId{0}).children[0];
  auto [t2, r2] = expand(t1, best, with_chat(chat));
  EXPECT_EQ(t2.node(r2.displayed[0]).text, "Get off at Graca");
  EXPECT_EQ(t2.node(r2.displayed[0]).layer, 2);
  EXPECT_EQ(t2.active_path(), (std::vector<NodeId>{NodeId{0}, best}));
  EXPECT_EQ(t2.preferred_path().size(), 3u);
  EXPECT_EQ(t2.layers()[1].expansion_id, "t1-x2");
  EXPECT_EQ(t2.layers()[1].seed, layer_seed(42, 1));
}

TEST(AddThought, JoinsLayerAndExpandsImmediately) {
  Script s = five_options();
  const std::string mine = "Ask locals for a fado bar";
  s.children[mine] = {{"Try Tasca do Chico", 9}, {"Book ahead", 5}};
  auto chat = std::make_shared<LambdaChat>(s);
  auto base = expand(fresh(), NodeId{0}, with_chat(chat)).tree;
  Events ev;
  auto [tree, result] = add_user_thought(base, NodeId{0}, mine, with_chat(chat), ev.sink());

  const auto& root = tree.node(NodeId{0});
  ASSERT_EQ(root.children.size(), 4u);
  const auto& user = tree.node(root.children.back());
  EXPECT_EQ(user.text, mine);
  EXPECT_EQ(user.source, ThoughtSource::user);
  EXPECT_DOUBLE_EQ(*user.score, 0.4);  // unscripted candidate scores 4
  EXPECT_EQ(user.expansion_state, ExpansionState::expanded);
  std::set<int> ranks;
  for (auto c : root.children) ranks.insert(*tree.node(c).rank);
  EXPECT_EQ(ranks, (std::set<int>{1, 2, 3, 4}));
  EXPECT_EQ(tree.active_path(), (std::vector<NodeId>{NodeId{0}, user.id}));
  ASSERT_EQ(result.displayed.size(), 2u);
  EXPECT_EQ(tree.node(result.displayed[0]).text, "Try Tasca do Chico");
  EXPECT_EQ(tree.node(result.displayed[0]).parent, user.id);
  EXPECT_EQ(tree.layers()[0].candidates.back().source, ThoughtSource::user);
  EXPECT_EQ(ev.phases(), (std::vector<Phase>{Phase::generating, Phase::evaluating, Phase::selecting, Phase::done}));
  auto tags = chat->tags();
  EXPECT_TRUE(std::find(tags.begin(), tags.end(), "user/evaluate/0") != tags.end());
  validate(tree);
}

TEST(AddThought, RegroupsTheLayer) {
  Script s = five_options();
  s.children["take tram 28 on arrival!"] = {{"Sit on the left", 6}, {"Hold on", 6}};
  auto chat = std::make_shared<LambdaChat>(s);
  auto base = expand(fresh(settings(GroupingMethod::embedding)), NodeId{0}, with_chat(chat)).tree;
  auto [tree, result] = add_user_thought(base, NodeId{0}, "take tram 28 on arrival!", with_chat(chat));
  const auto& root = tree.node(NodeId{0});
  const auto& user = tree.node(root.children.back());
  ASSERT_TRUE(user.group.has_value());
  const auto& g = tree.groups().at(*user.group);
  EXPECT_EQ(g.members.size(), 2u);
  EXPECT_EQ(g.representative, root.children[0]);
  EXPECT_FALSE(user.rank.has_value());
  std::set<int> ranks;
  for (auto c : root.children) {
    if (tree.node(c).rank) ranks.insert(*tree.node(c).rank);
  }
  EXPECT_EQ(ranks, (std::set<int>{1, 2, 3}));
  validate(tree);
}

TEST(AddThought, Preconditions) {
  auto chat = std::make_shared<LambdaChat>(five_options());
  auto base = expand(fresh(), NodeId{0}, with_chat(chat)).tree;
  auto leaf = base.node(NodeId{0}).children[0];
  Events ev;
  EXPECT_ERRC(add_user_thought(base, NodeId{0}, "   ", with_chat(chat), ev.sink()), Errc::empty_text);
  EXPECT_EQ(ev.phases(), std::vector<Phase>{Phase::error});
  EXPECT_ERRC(add_user_thought(base, leaf, "x", with_chat(chat)), Errc::parent_not_expanded);
  EXPECT_ERRC(add_user_thought(base, NodeId{99}, "x", with_chat(chat)), Errc::unknown_node);
}

TEST(AddThought, FailureLeavesTreeUnchanged) {
  Script s = five_options();
  auto chat = std::make_shared<LambdaChat>(s);
  auto base = expand(fresh(), NodeId{0}, with_chat(chat)).tree;
  auto failing = std::make_shared<LambdaChat>([](const providers::CompletionRequest& req) -> std::vector<std::string> {
    if (starts_with(req.call_tag, "generate")) return {"1. fine\n2. also fine\n"};
    throw Error(Errc::provider_unavailable, "down");
  });
  const auto before = base.state();
  EXPECT_ERRC(add_user_thought(base, NodeId{0}, "new idea", with_chat(failing)), Errc::provider_unavailable);
  EXPECT_EQ(base.state(), before);
}

TEST(Expand, RankOneHasMaximumScoreOnRandomScripts) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    Script s;
    int k = std::uniform_int_distribution<int>(2, 6)(rng);
    for (int i = 0; i < k; ++i) {
      s.children["(root)"].push_back({"Option " + std::to_string(i), std::uniform_int_distribution<int>(1, 10)(rng)});
    }
    auto [tree, result] = expand(fresh(settings(GroupingMethod::embedding), {k, std::min(k, 3) < 2 ? 2 : std::min(k, 3)}),
                                 NodeId{0}, with_chat(std::make_shared<LambdaChat>(s)));
    double best = -1;
    NodeId rank1{};
    for (auto id : result.displayed) {
      const auto& n = tree.node(id);
      best = std::max(best, *n.score);
      if (n.rank == 1) rank1 = id;
    }
    EXPECT_DOUBLE_EQ(*tree.node(rank1).score, best);
  }
}

}  // namespace
}  // namespace itot::engine
