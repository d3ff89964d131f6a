#pragma once

/**
 * Thought tree data model.
 *
 * A ThoughtTree is an immutable snapshot. Every operation in this header
 * takes a tree by const reference and returns a new tree, so snapshots can
 * be shared read-only across threads. Serialising access to the *latest*
 * snapshot of a session is the caller's job (see store.hpp and api.hpp).
 *
 * Layout:
 *   - node n0 is the root (layer 0, the user's task text)
 *   - each expansion attaches one layer of children under a leaf and
 *     records the DynamicSettings and seed it ran with
 *   - when grouping is enabled, every displayed child belongs to exactly one
 *     ThoughtGroup; only group representatives carry a rank
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "itot/error.hpp"
#include "itot/prompt_defaults.hpp"
#include "itot/text.hpp"

namespace itot {

// ---------------------------------------------------------------------------
// Identifiers
// ---------------------------------------------------------------------------

template <class Tag>
struct Id {
  std::uint32_t value = 0;
  friend constexpr auto operator<=>(const Id&, const Id&) = default;
};

struct NodeTag {
  static constexpr char prefix = 'n';
};
struct GroupTag {
  static constexpr char prefix = 'g';
};

using NodeId = Id<NodeTag>;
using GroupId = Id<GroupTag>;

template <class Tag>
std::string to_string(Id<Tag> id) {
  return Tag::prefix + std::to_string(id.value);
}

namespace detail {
template <class Tag>
Id<Tag> parse_id_impl(std::string_view s) {
  if (s.size() < 2 || s.front() != Tag::prefix || s.size() > 11) {
    fail(Errc::invalid_request, "malformed id '" + std::string(s) + "'");
  }
  std::uint64_t v = 0;
  for (char c : s.substr(1)) {
    if (c < '0' || c > '9') fail(Errc::invalid_request, "malformed id '" + std::string(s) + "'");
    v = v * 10 + static_cast<unsigned>(c - '0');
  }
  if (v > UINT32_MAX) fail(Errc::invalid_request, "id out of range '" + std::string(s) + "'");
  return Id<Tag>{static_cast<std::uint32_t>(v)};
}
}  // namespace detail

inline NodeId parse_node_id(std::string_view s) { return detail::parse_id_impl<NodeTag>(s); }
inline GroupId parse_group_id(std::string_view s) { return detail::parse_id_impl<GroupTag>(s); }

// ---------------------------------------------------------------------------
// Enumerations
// ---------------------------------------------------------------------------

enum class GenerationMethod { sample, propose };
enum class EvaluationMethod { comparative, individual };
enum class SelectionMethod { greedy, sample };
enum class GroupingMethod { embedding, logical, none };
enum class ThoughtSource { model, user };
enum class ExpansionState { leaf, expanded, collapsed };

template <class E, std::size_t N>
using EnumTable = std::array<std::pair<E, std::string_view>, N>;

constexpr auto enum_table(GenerationMethod) {
  return EnumTable<GenerationMethod, 2>{{{GenerationMethod::sample, "sample"}, {GenerationMethod::propose, "propose"}}};
}
constexpr auto enum_table(EvaluationMethod) {
  return EnumTable<EvaluationMethod, 2>{
      {{EvaluationMethod::comparative, "comparative"}, {EvaluationMethod::individual, "individual"}}};
}
constexpr auto enum_table(SelectionMethod) {
  return EnumTable<SelectionMethod, 2>{{{SelectionMethod::greedy, "greedy"}, {SelectionMethod::sample, "sample"}}};
}
constexpr auto enum_table(GroupingMethod) {
  return EnumTable<GroupingMethod, 3>{
      {{GroupingMethod::embedding, "embedding"}, {GroupingMethod::logical, "logical"}, {GroupingMethod::none, "none"}}};
}
constexpr auto enum_table(ThoughtSource) {
  return EnumTable<ThoughtSource, 2>{{{ThoughtSource::model, "model"}, {ThoughtSource::user, "user"}}};
}
constexpr auto enum_table(ExpansionState) {
  return EnumTable<ExpansionState, 3>{{{ExpansionState::leaf, "leaf"},
                                       {ExpansionState::expanded, "expanded"},
                                       {ExpansionState::collapsed, "collapsed"}}};
}

template <class E>
concept NamedEnum = std::is_enum_v<E> && requires(E e) { enum_table(e); };

template <NamedEnum E>
constexpr std::string_view to_string(E value) {
  for (const auto& [e, name] : enum_table(E{})) {
    if (e == value) return name;
  }
  return "?";
}

template <NamedEnum E>
E enum_from_string(std::string_view name) {
  for (const auto& [e, n] : enum_table(E{})) {
    if (n == name) return e;
  }
  fail(Errc::invalid_request, "unknown enumeration value '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Settings and prompts
// ---------------------------------------------------------------------------

/// Fixed at tree creation.
struct TreeSettings {
  std::string model_id = "gpt-4o";
  double temperature = 0.7;
  GenerationMethod generation_method = GenerationMethod::propose;
  EvaluationMethod evaluation_method = EvaluationMethod::individual;
  SelectionMethod selection_method = SelectionMethod::greedy;
  GroupingMethod grouping_method = GroupingMethod::embedding;
  double grouping_threshold = 0.8;
  /// Base seed; each layer derives its own seed from it.
  std::uint64_t seed = 42;
  /// Single-vote calls cast per comparative evaluation.
  int vote_count = 3;

  bool operator==(const TreeSettings&) const = default;
};

/// Adjustable between expansions.
struct DynamicSettings {
  int generate_count = 5;  // k
  int display_count = 3;   // b

  bool operator==(const DynamicSettings&) const = default;
};

inline constexpr int kMinDisplayCount = 2;
inline constexpr int kMaxDisplayCount = 5;

inline void validate(const TreeSettings& s) {
  require(!s.model_id.empty(), Errc::invalid_settings, "model_id must be nonempty");
  require(std::isfinite(s.temperature) && s.temperature >= 0.0 && s.temperature <= 2.0, Errc::invalid_settings,
          "temperature must lie in [0, 2]");
  require(std::isfinite(s.grouping_threshold) && s.grouping_threshold >= 0.0 && s.grouping_threshold <= 1.0,
          Errc::invalid_settings, "grouping_threshold must lie in [0, 1]");
  require(s.vote_count >= 1, Errc::invalid_settings, "vote_count must be >= 1");
}

inline void validate(const DynamicSettings& d) {
  require(d.generate_count >= 1, Errc::invalid_settings, "generate_count (k) must be >= 1");
  require(d.display_count >= kMinDisplayCount && d.display_count <= kMaxDisplayCount, Errc::invalid_settings,
          "display_count (b) must lie in [2, 5]");
  require(d.display_count <= d.generate_count, Errc::invalid_settings,
          "display_count (b) must not exceed generate_count (k)");
}

struct PromptBundle {
  std::string main_prompt;
  std::optional<std::string> example_prompt;
  std::optional<std::string> evaluation_prompt;

  bool operator==(const PromptBundle&) const = default;
};

/// Fills unset optional prompts with the shipped defaults.
inline PromptBundle resolve(PromptBundle bundle) {
  auto defaults = prompts::default_prompts();
  if (!bundle.example_prompt) bundle.example_prompt = defaults.example_prompt;
  if (!bundle.evaluation_prompt) bundle.evaluation_prompt = defaults.evaluation_prompt;
  return bundle;
}

// ---------------------------------------------------------------------------
// Nodes, groups, layers
// ---------------------------------------------------------------------------

struct ThoughtNode {
  NodeId id;
  std::optional<NodeId> parent;
  int layer = 0;
  std::string text;
  ThoughtSource source = ThoughtSource::model;
  std::optional<double> score;
  std::optional<int> rank;
  ExpansionState expansion_state = ExpansionState::leaf;
  std::optional<GroupId> group;
  std::vector<NodeId> children;

  bool operator==(const ThoughtNode&) const = default;
};

struct SimilarityEvidence {
  NodeId first;
  NodeId second;
  double similarity = 0.0;

  bool operator==(const SimilarityEvidence&) const = default;
};

struct ThoughtGroup {
  GroupId id;
  std::vector<NodeId> members;
  NodeId representative;
  GroupingMethod method = GroupingMethod::embedding;
  std::vector<SimilarityEvidence> evidence;

  bool operator==(const ThoughtGroup&) const = default;
};

/// One generated (or user-inserted) candidate as seen by an expansion.
struct CandidateRecord {
  std::string text;
  double score = 0.0;
  ThoughtSource source = ThoughtSource::model;
  std::optional<NodeId> node;  // set when the candidate was displayed

  bool operator==(const CandidateRecord&) const = default;
};

/// History of one expansion: the settings it used and everything it saw.
struct LayerRecord {
  NodeId parent;
  std::string expansion_id;
  DynamicSettings dynamic;
  std::uint64_t seed = 0;
  std::vector<CandidateRecord> candidates;
  std::vector<std::string> warnings;
  std::optional<double> consistency;

  bool operator==(const LayerRecord&) const = default;
};

/// Plain aggregate behind a ThoughtTree; used by serialisation.
struct TreeState {
  std::string tree_id;
  Timestamp created_at{};
  TreeSettings settings;
  DynamicSettings dynamic;
  PromptBundle prompts;
  std::map<NodeId, ThoughtNode> nodes;
  std::map<GroupId, ThoughtGroup> groups;
  std::vector<LayerRecord> layers;
  std::vector<NodeId> preferred_path;
  std::vector<NodeId> active_path;
  std::uint32_t next_node = 0;
  std::uint32_t next_group = 0;

  bool operator==(const TreeState&) const = default;
};

class ThoughtTree;

ThoughtTree attach_layer(const ThoughtTree& tree, NodeId parent_id, std::vector<ThoughtNode> nodes,
                         std::vector<ThoughtGroup> groups, LayerRecord record = {});
ThoughtTree insert_thought(const ThoughtTree& tree, NodeId parent_id, ThoughtNode node,
                           std::vector<ThoughtGroup> layer_groups);
ThoughtTree toggle_collapse(const ThoughtTree& tree, NodeId node_id);
ThoughtTree update_dynamic(const ThoughtTree& tree, const DynamicSettings& dynamic);
void validate(const ThoughtTree& tree);

namespace detail {
std::vector<NodeId> preferred_path(const TreeState& state);
void validate_state(const TreeState& state);
ThoughtTree make_tree(TreeState state);
}  // namespace detail

class ThoughtTree {
 public:
  /// Rebuilds a tree from stored state; throws invalid-tree if any invariant fails.
  static ThoughtTree restore(TreeState state) {
    detail::validate_state(state);
    return ThoughtTree(std::move(state));
  }

  const TreeState& state() const noexcept { return state_; }
  const std::string& id() const noexcept { return state_.tree_id; }
  Timestamp created_at() const noexcept { return state_.created_at; }
  const TreeSettings& settings() const noexcept { return state_.settings; }
  const DynamicSettings& dynamic() const noexcept { return state_.dynamic; }
  const PromptBundle& prompts() const noexcept { return state_.prompts; }
  const std::map<NodeId, ThoughtNode>& nodes() const noexcept { return state_.nodes; }
  const std::map<GroupId, ThoughtGroup>& groups() const noexcept { return state_.groups; }
  const std::vector<LayerRecord>& layers() const noexcept { return state_.layers; }
  const std::vector<NodeId>& preferred_path() const noexcept { return state_.preferred_path; }
  const std::vector<NodeId>& active_path() const noexcept { return state_.active_path; }

  NodeId root_id() const noexcept { return NodeId{0}; }
  NodeId next_node_id() const noexcept { return NodeId{state_.next_node}; }
  GroupId next_group_id() const noexcept { return GroupId{state_.next_group}; }

  const ThoughtNode* find(NodeId id) const {
    auto it = state_.nodes.find(id);
    return it == state_.nodes.end() ? nullptr : &it->second;
  }

  const ThoughtNode& node(NodeId id) const {
    const auto* n = find(id);
    if (n == nullptr) fail(Errc::unknown_node, "no node " + to_string(id) + " in tree " + state_.tree_id);
    return *n;
  }

  /// Node ids from the root down to `id`, inclusive.
  std::vector<NodeId> path_to(NodeId id) const {
    std::vector<NodeId> path;
    for (const auto* n = &node(id);; n = &node(*n->parent)) {
      path.push_back(n->id);
      if (!n->parent) break;
    }
    std::reverse(path.begin(), path.end());
    return path;
  }

  std::vector<std::string> path_texts(NodeId id) const {
    std::vector<std::string> texts;
    for (auto n : path_to(id)) texts.push_back(node(n).text);
    return texts;
  }

  /// Deepest node layer (0 for a root-only tree).
  int depth() const {
    int d = 0;
    for (const auto& [_, n] : state_.nodes) d = std::max(d, n.layer);
    return d;
  }

  friend bool operator==(const ThoughtTree&, const ThoughtTree&) = default;

 private:
  explicit ThoughtTree(TreeState state) : state_(std::move(state)) {}
  friend ThoughtTree detail::make_tree(TreeState state);

  TreeState state_;
};

// ---------------------------------------------------------------------------
// Preferred path and ranking
// ---------------------------------------------------------------------------

namespace detail {

/// Displayed children that compete for rank: group representatives and ungrouped nodes.
inline bool is_rank_bearing(const TreeState& state, const ThoughtNode& node) {
  if (!node.group) return true;
  auto it = state.groups.find(*node.group);
  return it == state.groups.end() || it->second.representative == node.id;
}

/// True when `a` is a better descent choice than `b`: higher score, then lower rank, then lower id.
inline bool better_choice(const ThoughtNode& a, const ThoughtNode& b) {
  double sa = a.score.value_or(-INFINITY);
  double sb = b.score.value_or(-INFINITY);
  if (sa != sb) return sa > sb;
  int ra = a.rank.value_or(INT32_MAX);
  int rb = b.rank.value_or(INT32_MAX);
  if (ra != rb) return ra < rb;
  return a.id < b.id;
}

inline std::vector<NodeId> preferred_path(const TreeState& state) {
  std::vector<NodeId> path{NodeId{0}};
  // Collapse state is ignored: it only affects display.
  for (const ThoughtNode* current = &state.nodes.at(NodeId{0});;) {
    const ThoughtNode* best = nullptr;
    for (auto child_id : current->children) {
      const auto& child = state.nodes.at(child_id);
      if (!is_rank_bearing(state, child)) continue;
      if (best == nullptr || better_choice(child, *best)) best = &child;
    }
    if (best == nullptr) break;
    path.push_back(best->id);
    current = best;
  }
  return path;
}

inline std::vector<NodeId> path_to(const TreeState& state, NodeId id) {
  std::vector<NodeId> path;
  for (const auto* n = &state.nodes.at(id);; n = &state.nodes.at(*n->parent)) {
    path.push_back(n->id);
    if (!n->parent) break;
  }
  std::reverse(path.begin(), path.end());
  return path;
}

inline ThoughtTree make_tree(TreeState state) { return ThoughtTree(std::move(state)); }

}  // namespace detail

inline std::vector<NodeId> compute_preferred_path(const ThoughtTree& tree) {
  return detail::preferred_path(tree.state());
}

/// Assigns ranks 1..m to the rank-bearing nodes of one sibling layer, best score first
/// (ties: lower node id). Non-representative group members lose their rank.
inline void assign_ranks(std::vector<ThoughtNode>& layer, const std::vector<ThoughtGroup>& groups) {
  std::map<NodeId, GroupId> rep_of;
  for (const auto& g : groups) {
    for (auto m : g.members) rep_of[m] = g.id;
  }
  std::vector<ThoughtNode*> bearing;
  for (auto& n : layer) {
    n.rank.reset();
    auto it = rep_of.find(n.id);
    bool is_rep = true;
    if (it != rep_of.end()) {
      for (const auto& g : groups) {
        if (g.id == it->second) is_rep = g.representative == n.id;
      }
    }
    if (is_rep) bearing.push_back(&n);
  }
  std::stable_sort(bearing.begin(), bearing.end(), [](const ThoughtNode* a, const ThoughtNode* b) {
    double sa = a->score.value_or(-INFINITY);
    double sb = b->score.value_or(-INFINITY);
    if (sa != sb) return sa > sb;
    return a->id < b->id;
  });
  for (std::size_t i = 0; i < bearing.size(); ++i) bearing[i]->rank = static_cast<int>(i + 1);
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

namespace detail {

inline void check(bool ok, const std::string& what) {
  if (!ok) fail(Errc::invalid_tree, what);
}

inline void validate_state(const TreeState& s) {
  try {
    validate(s.settings);
    validate(s.dynamic);
  } catch (const Error& e) {
    fail(Errc::invalid_tree, e.detail());
  }
  check(!s.tree_id.empty(), "tree_id must be nonempty");
  check(!s.prompts.main_prompt.empty(), "main prompt must be nonempty");
  check(s.prompts.example_prompt.has_value() && s.prompts.evaluation_prompt.has_value(),
        "optional prompts must be resolved");

  // Nodes and links.
  auto root_it = s.nodes.find(NodeId{0});
  check(root_it != s.nodes.end(), "root node n0 missing");
  const auto& root = root_it->second;
  check(!root.parent && root.layer == 0 && root.source == ThoughtSource::user && root.text == s.prompts.main_prompt,
        "root must be a parentless layer-0 user node holding the main prompt");
  check(!root.group && !root.rank && !root.score, "root carries no score, rank or group");

  for (const auto& [id, n] : s.nodes) {
    const auto name = to_string(id);
    check(n.id == id, "node key mismatch at " + name);
    check(id.value < s.next_node, "node id " + name + " not below next_node");
    check(!n.text.empty(), "empty text at " + name);
    if (n.score) check(std::isfinite(*n.score), "non-finite score at " + name);
    if (id != NodeId{0}) {
      check(n.parent.has_value(), "second root " + name);
      auto p = s.nodes.find(*n.parent);
      check(p != s.nodes.end(), "dangling parent of " + name);
      check(n.layer == p->second.layer + 1, "layer(child) != layer(parent)+1 at " + name);
      check(std::count(p->second.children.begin(), p->second.children.end(), id) == 1,
            "parent does not list " + name + " exactly once");
    }
    check((n.expansion_state == ExpansionState::leaf) == n.children.empty(),
          "expansion state inconsistent with children at " + name);
    for (auto c : n.children) {
      auto ci = s.nodes.find(c);
      check(ci != s.nodes.end() && ci->second.parent == id, "child link broken under " + name);
    }
    if (n.group) {
      auto g = s.groups.find(*n.group);
      check(g != s.groups.end(), "node " + name + " references missing group");
      check(std::count(g->second.members.begin(), g->second.members.end(), id) == 1,
            "group does not list " + name);
    } else if (id != NodeId{0}) {
      check(s.settings.grouping_method == GroupingMethod::none, "ungrouped node " + name + " while grouping is on");
    }
  }

  // Groups.
  if (s.settings.grouping_method == GroupingMethod::none) check(s.groups.empty(), "groups present while grouping is off");
  for (const auto& [gid, g] : s.groups) {
    const auto name = to_string(gid);
    check(g.id == gid, "group key mismatch at " + name);
    check(gid.value < s.next_group, "group id " + name + " not below next_group");
    check(!g.members.empty(), "empty group " + name);
    check(g.method == s.settings.grouping_method, "group method differs from tree setting at " + name);
    check(std::find(g.members.begin(), g.members.end(), g.representative) != g.members.end(),
          "representative outside members at " + name);
    std::optional<NodeId> parent;
    std::set<NodeId> seen;
    for (auto m : g.members) {
      check(seen.insert(m).second, "duplicate member in " + name);
      auto n = s.nodes.find(m);
      check(n != s.nodes.end() && n->second.group == gid, "member/group link broken in " + name);
      if (parent) check(n->second.parent == parent, "members of " + name + " have different parents");
      parent = n->second.parent;
    }
  }

  // Ranks per sibling layer.
  for (const auto& [id, n] : s.nodes) {
    if (n.children.empty()) continue;
    std::vector<int> ranks;
    std::size_t bearing = 0;
    for (auto c : n.children) {
      const auto& child = s.nodes.at(c);
      if (is_rank_bearing(s, child)) {
        ++bearing;
        if (child.rank) ranks.push_back(*child.rank);
      } else {
        check(!child.rank, "non-representative " + to_string(c) + " carries a rank");
      }
    }
    if (ranks.empty()) continue;
    check(ranks.size() == bearing, "partially ranked layer under " + to_string(id));
    std::sort(ranks.begin(), ranks.end());
    for (std::size_t i = 0; i < ranks.size(); ++i) {
      check(ranks[i] == static_cast<int>(i + 1), "ranks under " + to_string(id) + " are not a permutation of 1..m");
    }
  }

  // Layers.
  for (const auto& rec : s.layers) {
    auto p = s.nodes.find(rec.parent);
    check(p != s.nodes.end() && !p->second.children.empty(), "layer record for unexpanded parent");
    try {
      validate(rec.dynamic);
    } catch (const Error& e) {
      fail(Errc::invalid_tree, "layer snapshot: " + e.detail());
    }
  }

  // Paths.
  check(s.preferred_path == preferred_path(s), "preferred_path is stale");
  check(!s.active_path.empty() && s.active_path.front() == NodeId{0}, "active_path must start at the root");
  for (std::size_t i = 1; i < s.active_path.size(); ++i) {
    auto n = s.nodes.find(s.active_path[i]);
    check(n != s.nodes.end() && n->second.parent == s.active_path[i - 1], "active_path is not a tree path");
  }
  NodeId expected_tip = s.layers.empty() ? NodeId{0} : s.layers.back().parent;
  check(s.active_path.back() == expected_tip, "active_path must end at the most recently expanded node");
}

}  // namespace detail

inline void validate(const ThoughtTree& tree) { detail::validate_state(tree.state()); }

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Identity of a new tree. Empty id / unset time are filled with a random id and the current time.
struct TreeOrigin {
  std::string tree_id;
  std::optional<Timestamp> created_at;
};

inline std::string random_tree_id() {
  std::random_device rd;
  std::uint64_t v = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  return "t" + text::hex64(v);
}

inline ThoughtTree new_tree(PromptBundle prompts, const TreeSettings& settings, const DynamicSettings& dynamic,
                            TreeOrigin origin = {}) {
  require(!text::trim(prompts.main_prompt).empty(), Errc::empty_main_prompt, "main prompt must be nonempty");
  validate(settings);
  validate(dynamic);

  TreeState s;
  s.tree_id = origin.tree_id.empty() ? random_tree_id() : std::move(origin.tree_id);
  s.created_at = origin.created_at.value_or(now_ms());
  s.settings = settings;
  s.dynamic = dynamic;
  s.prompts = resolve(std::move(prompts));

  ThoughtNode root;
  root.id = NodeId{0};
  root.layer = 0;
  root.text = s.prompts.main_prompt;
  root.source = ThoughtSource::user;
  s.nodes.emplace(root.id, std::move(root));
  s.next_node = 1;
  s.preferred_path = {NodeId{0}};
  s.active_path = {NodeId{0}};
  return detail::make_tree(std::move(s));
}

namespace detail {

inline void check_layer(const TreeState& s, NodeId parent_id, const std::vector<ThoughtNode>& nodes,
                        const std::vector<ThoughtGroup>& groups, const std::set<NodeId>& existing_members) {
  const auto& parent = s.nodes.at(parent_id);
  std::set<NodeId> fresh;
  for (const auto& n : nodes) {
    require(n.parent == parent_id, Errc::invalid_layer, to_string(n.id) + " does not name the parent");
    require(n.layer == parent.layer + 1, Errc::invalid_layer, to_string(n.id) + " has the wrong layer");
    require(!s.nodes.contains(n.id) && fresh.insert(n.id).second, Errc::invalid_layer,
            "node id " + to_string(n.id) + " is not fresh");
    require(n.id.value >= s.next_node, Errc::invalid_layer, "node id " + to_string(n.id) + " reuses a retired id");
    require(!text::trim(n.text).empty(), Errc::invalid_layer, "empty thought text");
    require(n.children.empty() && n.expansion_state == ExpansionState::leaf, Errc::invalid_layer,
            "new nodes must be leaves");
    if (n.score) require(std::isfinite(*n.score), Errc::invalid_layer, "non-finite score");
  }
  const bool grouping = s.settings.grouping_method != GroupingMethod::none;
  require(grouping || groups.empty(), Errc::invalid_layer, "groups supplied while grouping is off");
  std::map<NodeId, GroupId> membership;
  std::set<GroupId> gids;
  for (const auto& g : groups) {
    require(!s.groups.contains(g.id) && gids.insert(g.id).second && g.id.value >= s.next_group, Errc::invalid_layer,
            "group id " + to_string(g.id) + " is not fresh");
    require(!g.members.empty(), Errc::invalid_layer, "empty group");
    require(g.method == s.settings.grouping_method, Errc::invalid_layer, "group method differs from tree setting");
    require(std::find(g.members.begin(), g.members.end(), g.representative) != g.members.end(), Errc::invalid_layer,
            "representative outside members");
    for (auto m : g.members) {
      require(fresh.contains(m) || existing_members.contains(m), Errc::invalid_layer,
              "group member " + to_string(m) + " is not in this layer");
      require(membership.emplace(m, g.id).second, Errc::invalid_layer, to_string(m) + " is in two groups");
    }
  }
  for (const auto& n : nodes) {
    auto it = membership.find(n.id);
    if (grouping) require(it != membership.end(), Errc::invalid_layer, to_string(n.id) + " belongs to no group");
    require(n.group == (it == membership.end() ? std::nullopt : std::optional<GroupId>(it->second)),
            Errc::invalid_layer, to_string(n.id) + " group field disagrees with groups");
  }
}

/// Full re-validation after a layer change; violations are reported against the layer.
inline void recheck(const TreeState& s) {
  try {
    detail::validate_state(s);
  } catch (const Error& e) {
    fail(Errc::invalid_layer, e.detail());
  }
}

}  // namespace detail

/// Applies an expansion result: `nodes` become the children of the leaf `parent_id`.
inline ThoughtTree attach_layer(const ThoughtTree& tree, NodeId parent_id, std::vector<ThoughtNode> nodes,
                                std::vector<ThoughtGroup> groups, LayerRecord record) {
  const auto* parent = tree.find(parent_id);
  if (parent == nullptr) fail(Errc::unknown_parent, "no node " + to_string(parent_id));
  require(parent->expansion_state == ExpansionState::leaf, Errc::parent_already_expanded,
          to_string(parent_id) + " already has children");
  require(!nodes.empty(), Errc::invalid_layer, "a layer needs at least one node");
  const auto& old = tree.state();
  detail::check_layer(old, parent_id, nodes, groups, {});

  TreeState s = old;
  auto& p = s.nodes.at(parent_id);
  p.expansion_state = ExpansionState::expanded;
  for (auto& n : nodes) {
    p.children.push_back(n.id);
    s.next_node = std::max(s.next_node, n.id.value + 1);
    s.nodes.emplace(n.id, std::move(n));
  }
  for (auto& g : groups) {
    s.next_group = std::max(s.next_group, g.id.value + 1);
    s.groups.emplace(g.id, std::move(g));
  }
  record.parent = parent_id;
  if (record.expansion_id.empty()) record.expansion_id = s.tree_id + "-x" + std::to_string(s.layers.size() + 1);
  record.dynamic = s.dynamic;
  s.layers.push_back(std::move(record));
  s.active_path = detail::path_to(s, parent_id);
  s.preferred_path = detail::preferred_path(s);
  detail::recheck(s);
  return detail::make_tree(std::move(s));
}

/// Adds a user thought as an extra child of an expanded node. `layer_groups` replaces the
/// grouping of the whole sibling layer (empty when grouping is off); ranks are recomputed.
inline ThoughtTree insert_thought(const ThoughtTree& tree, NodeId parent_id, ThoughtNode node,
                                  std::vector<ThoughtGroup> layer_groups) {
  const auto* parent = tree.find(parent_id);
  if (parent == nullptr) fail(Errc::unknown_node, "no node " + to_string(parent_id));
  require(!parent->children.empty(), Errc::parent_not_expanded, to_string(parent_id) + " has no layer to join");
  require(!text::trim(node.text).empty(), Errc::empty_text, "thought text must be nonempty");

  TreeState s = tree.state();
  // Drop the layer's previous groups; members are re-grouped below.
  for (auto c : parent->children) {
    auto& child = s.nodes.at(c);
    if (child.group) s.groups.erase(*child.group);
    child.group.reset();
  }
  std::set<NodeId> existing(parent->children.begin(), parent->children.end());
  for (const auto& g : layer_groups) {
    for (auto m : g.members) {
      if (m != node.id) s.nodes.at(m).group = g.id;
    }
  }
  detail::check_layer(s, parent_id, {node}, layer_groups, existing);

  auto& p = s.nodes.at(parent_id);
  p.children.push_back(node.id);
  s.next_node = std::max(s.next_node, node.id.value + 1);
  for (auto& layer_rec : s.layers) {
    if (layer_rec.parent == parent_id) {
      layer_rec.candidates.push_back({node.text, node.score.value_or(0.0), node.source, node.id});
    }
  }
  s.nodes.emplace(node.id, std::move(node));
  for (auto& g : layer_groups) {
    s.next_group = std::max(s.next_group, g.id.value + 1);
    s.groups.emplace(g.id, std::move(g));
  }

  std::vector<ThoughtNode> layer;
  for (auto c : p.children) layer.push_back(s.nodes.at(c));
  std::vector<ThoughtGroup> groups;
  for (const auto& n : layer) {
    if (n.group && n.id == s.groups.at(*n.group).representative) groups.push_back(s.groups.at(*n.group));
  }
  assign_ranks(layer, groups);
  for (auto& n : layer) s.nodes.at(n.id).rank = n.rank;

  s.preferred_path = detail::preferred_path(s);
  detail::recheck(s);
  return detail::make_tree(std::move(s));
}

inline ThoughtTree toggle_collapse(const ThoughtTree& tree, NodeId node_id) {
  const auto& n = tree.node(node_id);
  require(!n.children.empty(), Errc::node_is_leaf, to_string(node_id) + " has no children to collapse");
  TreeState s = tree.state();
  auto& target = s.nodes.at(node_id);
  target.expansion_state =
      target.expansion_state == ExpansionState::expanded ? ExpansionState::collapsed : ExpansionState::expanded;
  return detail::make_tree(std::move(s));
}

inline ThoughtTree update_dynamic(const ThoughtTree& tree, const DynamicSettings& dynamic) {
  validate(dynamic);
  TreeState s = tree.state();
  s.dynamic = dynamic;
  return detail::make_tree(std::move(s));
}

}  // namespace itot
