#pragma once

#include <algorithm>
#include <cstdio>
#include <functional>
#include <future>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "itot/core.hpp"
#include "itot/grouping.hpp"
#include "itot/prompts.hpp"
#include "itot/providers.hpp"

namespace itot::engine {

enum class Phase { generating, evaluating, selecting, grouping, done, error };

constexpr auto enum_table(Phase) {
  return EnumTable<Phase, 6>{{{Phase::generating, "generating"},
                              {Phase::evaluating, "evaluating"},
                              {Phase::selecting, "selecting"},
                              {Phase::grouping, "grouping"},
                              {Phase::done, "done"},
                              {Phase::error, "error"}}};
}

struct StatusEvent {
  std::string tree_id;
  std::string expansion_id;
  Phase phase = Phase::generating;
  std::string detail;
  int sequence_no = 0;  // 1, 2, ... per expansion
  Timestamp timestamp{};

  bool operator==(const StatusEvent&) const = default;
};

using EventSink = std::function<void(const StatusEvent&)>;
using Clock = std::function<Timestamp()>;

struct ExpandOptions {
  /// Empty: "<tree_id>-x<layer number>".
  std::string expansion_id;
  Clock clock = now_ms;
  /// Called after each phase event; a throw aborts the expansion like a provider failure.
  std::function<void(Phase)> checkpoint;
};

struct ExpansionResult {
  std::string expansion_id;
  NodeId parent;
  std::vector<CandidateRecord> candidates;
  std::vector<NodeId> displayed;
  std::vector<ThoughtGroup> groups;
  std::vector<std::string> warnings;
  std::optional<double> consistency;
};

struct Expansion {
  ThoughtTree tree;
  ExpansionResult result;
};

// ---------------------------------------------------------------------------
// Selection
// ---------------------------------------------------------------------------

/// Greedy: the b best indices, best first, ties to the lower index. Sample: b indices drawn
/// uniformly without replacement using `seed`, listed best first.
inline std::vector<std::size_t> select_thoughts(const std::vector<double>& scores, int b, SelectionMethod method,
                                                std::uint64_t seed) {
  require(b >= 1, Errc::precondition, "b must be >= 1");
  const std::size_t m = scores.size();
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(b), m);
  std::vector<std::size_t> idx(m);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto by_score = [&](std::size_t a, std::size_t c) {
    if (scores[a] != scores[c]) return scores[a] > scores[c];
    return a < c;
  };
  if (method == SelectionMethod::greedy) {
    std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take), idx.end(), by_score);
    idx.resize(take);
    return idx;
  }
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < take; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, m - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(take);
  std::sort(idx.begin(), idx.end(), by_score);
  return idx;
}

/// Seed for the n-th expansion of a tree (splitmix64 of base + n).
inline std::uint64_t layer_seed(std::uint64_t base, std::size_t n) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(n) + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

namespace detail {

inline std::string format_threshold(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

/// Runs every task concurrently; results in task order. Rethrows the first failure (by index)
/// only after all tasks have finished.
template <class T>
std::vector<T> run_all(std::vector<std::function<T()>> tasks) {
  std::vector<std::future<T>> futures;
  futures.reserve(tasks.size());
  for (auto& t : tasks) futures.push_back(std::async(std::launch::async, std::move(t)));
  std::vector<T> out;
  std::exception_ptr first;
  for (auto& f : futures) {
    try {
      out.push_back(f.get());
    } catch (...) {
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
  return out;
}

class Emitter {
 public:
  Emitter(std::string tree_id, std::string expansion_id, const EventSink& sink, const ExpandOptions& opts)
      : tree_id_(std::move(tree_id)), expansion_id_(std::move(expansion_id)), sink_(sink), opts_(opts) {}

  void phase(Phase p, std::string detail) {
    emit(p, std::move(detail));
    if (opts_.checkpoint) opts_.checkpoint(p);
  }

  void done(std::string detail) { emit(Phase::done, std::move(detail)); }

  /// Reports a failure; never throws.
  void error(std::string detail) noexcept {
    try {
      emit(Phase::error, std::move(detail));
    } catch (...) {
    }
  }

  const std::string& expansion_id() const { return expansion_id_; }

 private:
  void emit(Phase p, std::string detail) {
    if (!sink_) return;
    sink_(StatusEvent{tree_id_, expansion_id_, p, std::move(detail), ++sequence_, opts_.clock()});
  }

  std::string tree_id_;
  std::string expansion_id_;
  const EventSink& sink_;
  const ExpandOptions& opts_;
  int sequence_ = 0;
};

inline providers::CompletionRequest make_request(const TreeSettings& s, prompts::MessageSequence messages,
                                                 std::string tag, int n = 1) {
  providers::CompletionRequest req;
  req.messages = std::move(messages);
  req.temperature = s.temperature;
  req.n = n;
  req.model_id = s.model_id;
  req.call_tag = std::move(tag);
  return req;
}

/// Raw candidate thoughts for the node at the end of `path`, duplicates removed.
inline std::vector<std::string> generate(const ThoughtTree& tree, const std::vector<std::string>& path, int k,
                                         const providers::Providers& p, std::vector<std::string>& warnings) {
  const auto& s = tree.settings();
  auto& chat = p.require_chat();
  auto sequences = prompts::build_generation_prompt(tree.prompts(), path, s.generation_method, k);

  std::mutex warn_mu;
  // One call, parsed; a parse failure gets exactly one more call with a distinct tag.
  auto call_parsed = [&](const prompts::MessageSequence& msgs, const std::string& tag) {
    for (int attempt = 0; attempt < 2; ++attempt) {
      auto req = make_request(s, msgs, attempt == 0 ? tag : tag + "/retry");
      auto replies = chat.complete(req);
      require(replies.size() == 1, Errc::provider_unavailable, "expected one completion");
      try {
        return prompts::parse_thoughts(replies.front(), s.generation_method, k);
      } catch (const Error& e) {
        if (e.code() != Errc::parse_failure) throw;
        if (attempt == 1) fail(Errc::generation_failed, "unparseable completion after retry (" + tag + ")");
        std::lock_guard lock(warn_mu);
        warnings.push_back("unparseable completion for " + tag + ", retried");
      }
    }
    fail(Errc::generation_failed, "unreachable");
  };

  std::vector<std::string> raw;
  if (s.generation_method == GenerationMethod::propose) {
    raw = call_parsed(sequences.front(), "generate/0");
    if (static_cast<int>(raw.size()) < k) {
      warnings.push_back("model proposed " + std::to_string(raw.size()) + " of " + std::to_string(k) + " thoughts");
    }
  } else {
    std::vector<std::function<std::vector<std::string>()>> tasks;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
      tasks.push_back([&, i] { return call_parsed(sequences[i], "generate/" + std::to_string(i)); });
    }
    for (auto& one : run_all(std::move(tasks))) raw.push_back(std::move(one.front()));
  }

  std::vector<std::string> out;
  std::set<std::string> seen;
  for (auto& t : raw) {
    auto line = text::single_line(t);
    if (!seen.insert(line).second) {
      warnings.push_back("dropped duplicate thought \"" + text::utf8_prefix(line, 60) + "\"");
      continue;
    }
    out.push_back(std::move(line));
  }
  return out;
}

/// Normalised scores in [0, 1]: individual score / 10, comparative vote share.
inline std::vector<double> evaluate(const ThoughtTree& tree, const std::vector<std::string>& path,
                                    const std::vector<std::string>& candidates, EvaluationMethod mode,
                                    const std::string& tag_prefix, const providers::Providers& p,
                                    std::vector<std::string>& warnings) {
  const auto& s = tree.settings();
  auto& chat = p.require_chat();
  auto sequences = prompts::build_evaluation_prompt(tree.prompts(), path, candidates, mode);

  std::vector<std::function<std::string()>> tasks;
  if (mode == EvaluationMethod::individual) {
    for (std::size_t i = 0; i < sequences.size(); ++i) {
      tasks.push_back([&, i] {
        return chat.complete(make_request(s, sequences[i], tag_prefix + "evaluate/" + std::to_string(i))).at(0);
      });
    }
  } else {
    for (int v = 0; v < s.vote_count; ++v) {
      tasks.push_back([&, v] {
        return chat.complete(make_request(s, sequences.front(), tag_prefix + "vote/" + std::to_string(v))).at(0);
      });
    }
  }
  auto replies = run_all(std::move(tasks));

  prompts::EvaluationResult parsed;
  try {
    parsed = prompts::parse_evaluation(replies, mode, static_cast<int>(candidates.size()));
  } catch (const Error& e) {
    if (e.code() == Errc::all_votes_invalid) fail(Errc::evaluation_failed, e.detail());
    throw;
  }
  warnings.insert(warnings.end(), parsed.warnings.begin(), parsed.warnings.end());
  std::vector<double> scores;
  for (double v : parsed.values) {
    scores.push_back(mode == EvaluationMethod::individual ? v / prompts::kMaxScore
                                                          : v / static_cast<double>(parsed.votes_cast));
  }
  return scores;
}

struct PlannedLayer {
  std::vector<ThoughtNode> nodes;
  std::vector<ThoughtGroup> groups;
  LayerRecord record;
  ExpansionResult result;
};

/// Generate, evaluate, select and group children for `parent` (whose path texts are `path`),
/// numbering new nodes from `next_node` and groups from `next_group`.
inline PlannedLayer plan_layer(const ThoughtTree& tree, NodeId parent, int parent_layer,
                               const std::vector<std::string>& path, const providers::Providers& p, Emitter& ev,
                               NodeId next_node, GroupId& next_group,
                               const std::function<void(std::vector<std::string>&)>& extra_evaluation = {},
                               const std::function<void(GroupId&, std::vector<std::string>&)>& extra_grouping = {}) {
  const auto& s = tree.settings();
  const auto& d = tree.dynamic();
  PlannedLayer out;
  auto& warnings = out.result.warnings;

  ev.phase(Phase::generating, "generating " + std::to_string(d.generate_count) + " thoughts for " + to_string(parent));
  auto candidates = generate(tree, path, d.generate_count, p, warnings);

  ev.phase(Phase::evaluating, "evaluating " + std::to_string(candidates.size()) + " thoughts (" +
                                  std::string(to_string(s.evaluation_method)) + ")");
  if (extra_evaluation) extra_evaluation(warnings);
  auto scores = evaluate(tree, path, candidates, s.evaluation_method, "", p, warnings);

  const auto seed = layer_seed(s.seed, tree.state().layers.size());
  ev.phase(Phase::selecting, "selecting " + std::to_string(std::min<std::size_t>(d.display_count, candidates.size())) +
                                 " of " + std::to_string(candidates.size()) + " (" +
                                 std::string(to_string(s.selection_method)) + ")");
  auto chosen = select_thoughts(scores, d.display_count, s.selection_method, seed);

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.record.candidates.push_back({candidates[i], scores[i], ThoughtSource::model, std::nullopt});
  }
  std::vector<std::string> shown_texts;
  std::vector<double> shown_scores;
  for (auto i : chosen) {
    ThoughtNode n;
    n.id = NodeId{next_node.value + static_cast<std::uint32_t>(out.nodes.size())};
    n.parent = parent;
    n.layer = parent_layer + 1;
    n.text = candidates[i];
    n.score = scores[i];
    out.record.candidates[i].node = n.id;
    out.result.displayed.push_back(n.id);
    shown_texts.push_back(n.text);
    shown_scores.push_back(scores[i]);
    out.nodes.push_back(std::move(n));
  }

  if (s.grouping_method != GroupingMethod::none) {
    ev.phase(Phase::grouping, "grouping " + std::to_string(out.nodes.size()) + " thoughts (" +
                                  std::string(to_string(s.grouping_method)) + ", threshold " +
                                  detail::format_threshold(s.grouping_threshold) + ")");
    if (extra_grouping) extra_grouping(next_group, warnings);
    auto sim = grouping::pairwise_similarity(shown_texts, s.grouping_method, p);
    auto clusters = grouping::group_thoughts(shown_texts, shown_scores, sim, s.grouping_threshold);
    out.groups = grouping::to_groups(clusters, out.result.displayed, s.grouping_method, next_group);
    for (const auto& g : out.groups) {
      for (auto m : g.members) {
        for (auto& n : out.nodes) {
          if (n.id == m) n.group = g.id;
        }
      }
    }
    out.record.consistency = grouping::consistency_signal(clusters, shown_texts.size());
  }
  assign_ranks(out.nodes, out.groups);

  out.record.parent = parent;
  out.record.expansion_id = ev.expansion_id();
  out.record.seed = seed;
  out.record.warnings = warnings;
  out.result.expansion_id = ev.expansion_id();
  out.result.parent = parent;
  out.result.candidates = out.record.candidates;
  out.result.groups = out.groups;
  out.result.consistency = out.record.consistency;
  return out;
}

inline std::string default_expansion_id(const ThoughtTree& tree) {
  return tree.id() + "-x" + std::to_string(tree.state().layers.size() + 1);
}

inline std::string describe(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) return std::string(err->token()) + ": " + err->detail();
  return e.what();
}

}  // namespace detail

/// Expands the leaf `parent_id`: generate k thoughts, score them, show b, group the shown ones.
/// On failure an error event is emitted, the exception propagates and `tree` is untouched.
inline Expansion expand(const ThoughtTree& tree, NodeId parent_id, const providers::Providers& providers,
                        const EventSink& sink = {}, const ExpandOptions& opts = {}) {
  auto expansion_id = opts.expansion_id.empty() ? detail::default_expansion_id(tree) : opts.expansion_id;
  detail::Emitter ev(tree.id(), expansion_id, sink, opts);
  try {
    const auto* parent = tree.find(parent_id);
    if (parent == nullptr) fail(Errc::unknown_node, "no node " + to_string(parent_id));
    require(parent->expansion_state == ExpansionState::leaf, Errc::parent_already_expanded,
            to_string(parent_id) + " already has children");

    auto next_group = tree.next_group_id();
    auto plan = detail::plan_layer(tree, parent_id, parent->layer, tree.path_texts(parent_id), providers, ev,
                                   tree.next_node_id(), next_group);
    auto next = attach_layer(tree, parent_id, plan.nodes, plan.groups, plan.record);
    ev.done(std::to_string(plan.nodes.size()) + " thoughts shown under " + to_string(parent_id));
    return {std::move(next), std::move(plan.result)};
  } catch (const std::exception& e) {
    ev.error(detail::describe(e));
    throw;
  }
}

/// Adds a user thought under the expanded node `parent_id`, scores it, regroups and re-ranks that
/// layer, then expands the new thought. All or nothing.
inline Expansion add_user_thought(const ThoughtTree& tree, NodeId parent_id, const std::string& thought,
                                  const providers::Providers& providers, const EventSink& sink = {},
                                  const ExpandOptions& opts = {}) {
  auto expansion_id = opts.expansion_id.empty() ? detail::default_expansion_id(tree) : opts.expansion_id;
  detail::Emitter ev(tree.id(), expansion_id, sink, opts);
  try {
    const auto* parent = tree.find(parent_id);
    if (parent == nullptr) fail(Errc::unknown_node, "no node " + to_string(parent_id));
    require(!parent->children.empty(), Errc::parent_not_expanded, to_string(parent_id) + " has no layer to join");
    auto text = text::single_line(thought);
    require(!text::trim(text).empty(), Errc::empty_text, "thought text must be nonempty");

    const auto& s = tree.settings();
    const auto parent_path = tree.path_texts(parent_id);
    auto child_path = parent_path;
    child_path.push_back(text);

    ThoughtNode user;
    user.id = tree.next_node_id();
    user.parent = parent_id;
    user.layer = parent->layer + 1;
    user.text = text;
    user.source = ThoughtSource::user;

    std::vector<ThoughtGroup> layer_groups;
    auto next_group = tree.next_group_id();

    auto score_user = [&](std::vector<std::string>& warnings) {
      user.score = detail::evaluate(tree, parent_path, {text}, EvaluationMethod::individual, "user/", providers,
                                    warnings)
                       .front();
    };
    auto regroup_layer = [&](GroupId& gid, std::vector<std::string>&) {
      std::vector<NodeId> ids = parent->children;
      ids.push_back(user.id);
      std::vector<std::string> texts;
      std::vector<double> scores;
      for (auto c : parent->children) {
        texts.push_back(tree.node(c).text);
        scores.push_back(tree.node(c).score.value_or(0.0));
      }
      texts.push_back(user.text);
      scores.push_back(user.score.value_or(0.0));
      auto sim = grouping::pairwise_similarity(texts, s.grouping_method, providers);
      auto clusters = grouping::group_thoughts(texts, scores, sim, s.grouping_threshold);
      layer_groups = grouping::to_groups(clusters, ids, s.grouping_method, gid);
      for (const auto& g : layer_groups) {
        if (std::find(g.members.begin(), g.members.end(), user.id) != g.members.end()) user.group = g.id;
      }
    };

    auto plan = detail::plan_layer(tree, user.id, user.layer, child_path, providers, ev,
                                   NodeId{user.id.value + 1}, next_group, score_user, regroup_layer);
    auto with_user = insert_thought(tree, parent_id, user, layer_groups);
    auto next = attach_layer(with_user, user.id, plan.nodes, plan.groups, plan.record);
    ev.done("added " + to_string(user.id) + " with " + std::to_string(plan.nodes.size()) + " thoughts shown");
    return {std::move(next), std::move(plan.result)};
  } catch (const std::exception& e) {
    ev.error(detail::describe(e));
    throw;
  }
}

}  // namespace itot::engine
