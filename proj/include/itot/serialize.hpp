#pragma once

// JSON forms of the tree model. Tree documents are canonical: keys sorted, two-space indent,
// trailing newline, so equal trees serialise to equal bytes.

#include <string>

#include "itot/core.hpp"
#include "json.hpp"

namespace itot {

inline constexpr int kSchemaVersion = 1;

namespace json_detail {

using nlohmann::json;

/// Typed field access; any shape error becomes `code`.
class Reader {
 public:
  Reader(const json& j, Errc code, std::string where) : j_(j), code_(code), where_(std::move(where)) {
    require(j.is_object(), code_, where_ + " must be an object");
  }

  bool has(const char* key) const { return j_.contains(key) && !j_.at(key).is_null(); }

  const json& at(const char* key) const {
    require(j_.contains(key), code_, where_ + "." + key + " is missing");
    return j_.at(key);
  }

  template <class T>
  T get(const char* key) const {
    try {
      return at(key).template get<T>();
    } catch (const nlohmann::json::exception&) {
      fail(code_, where_ + "." + key + " has the wrong type");
    }
  }

  template <class T>
  T get_or(const char* key, T fallback) const {
    return has(key) ? get<T>(key) : fallback;
  }

  template <class T>
  std::optional<T> opt(const char* key) const {
    if (!has(key)) return std::nullopt;
    return get<T>(key);
  }

  template <NamedEnum E>
  E get_enum(const char* key) const {
    auto name = get<std::string>(key);
    try {
      return enum_from_string<E>(name);
    } catch (const Error&) {
      fail(code_, where_ + "." + key + ": unknown value '" + name + "'");
    }
  }

  template <NamedEnum E>
  E get_enum_or(const char* key, E fallback) const {
    return has(key) ? get_enum<E>(key) : fallback;
  }

  NodeId node_id(const char* key) const { return parse_node(get<std::string>(key)); }

  NodeId parse_node(const std::string& s) const {
    try {
      return parse_node_id(s);
    } catch (const Error&) {
      fail(code_, where_ + ": malformed node id '" + s + "'");
    }
  }

  GroupId parse_group(const std::string& s) const {
    try {
      return parse_group_id(s);
    } catch (const Error&) {
      fail(code_, where_ + ": malformed group id '" + s + "'");
    }
  }

  std::vector<NodeId> node_ids(const char* key) const {
    std::vector<NodeId> out;
    for (const auto& s : get<std::vector<std::string>>(key)) out.push_back(parse_node(s));
    return out;
  }

  Errc code() const { return code_; }
  const std::string& where() const { return where_; }

 private:
  const json& j_;
  Errc code_;
  std::string where_;
};

inline json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }
inline json opt_json(const std::optional<int>& v) { return v ? json(*v) : json(nullptr); }
inline json opt_json(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

template <class Tag>
json opt_id(const std::optional<Id<Tag>>& v) {
  return v ? json(to_string(*v)) : json(nullptr);
}

template <class Tag>
json id_list(const std::vector<Id<Tag>>& ids) {
  json out = json::array();
  for (auto id : ids) out.push_back(to_string(id));
  return out;
}

}  // namespace json_detail

// ---------------------------------------------------------------------------
// Settings and prompts
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const TreeSettings& s) {
  return {{"model_id", s.model_id},
          {"temperature", s.temperature},
          {"generation_method", to_string(s.generation_method)},
          {"evaluation_method", to_string(s.evaluation_method)},
          {"selection_method", to_string(s.selection_method)},
          {"grouping_method", to_string(s.grouping_method)},
          {"grouping_threshold", s.grouping_threshold},
          {"seed", s.seed},
          {"vote_count", s.vote_count}};
}

/// Missing fields take their defaults; present fields must be well-typed.
inline TreeSettings settings_from_json(const nlohmann::json& j, Errc code = Errc::invalid_settings) {
  json_detail::Reader r(j, code, "settings");
  TreeSettings d;
  TreeSettings s;
  s.model_id = r.get_or<std::string>("model_id", d.model_id);
  s.temperature = r.get_or<double>("temperature", d.temperature);
  s.generation_method = r.get_enum_or("generation_method", d.generation_method);
  s.evaluation_method = r.get_enum_or("evaluation_method", d.evaluation_method);
  s.selection_method = r.get_enum_or("selection_method", d.selection_method);
  s.grouping_method = r.get_enum_or("grouping_method", d.grouping_method);
  s.grouping_threshold = r.get_or<double>("grouping_threshold", d.grouping_threshold);
  s.seed = r.get_or<std::uint64_t>("seed", d.seed);
  s.vote_count = r.get_or<int>("vote_count", d.vote_count);
  return s;
}

inline nlohmann::json to_json(const DynamicSettings& d) {
  return {{"generate_count", d.generate_count}, {"display_count", d.display_count}};
}

inline DynamicSettings dynamic_from_json(const nlohmann::json& j, Errc code = Errc::invalid_settings,
                                         DynamicSettings base = {}) {
  json_detail::Reader r(j, code, "dynamic");
  base.generate_count = r.get_or<int>("generate_count", base.generate_count);
  base.display_count = r.get_or<int>("display_count", base.display_count);
  return base;
}

inline nlohmann::json to_json(const PromptBundle& p) {
  return {{"main_prompt", p.main_prompt},
          {"example_prompt", json_detail::opt_json(p.example_prompt)},
          {"evaluation_prompt", json_detail::opt_json(p.evaluation_prompt)}};
}

inline PromptBundle prompts_from_json(const nlohmann::json& j, Errc code = Errc::invalid_request) {
  json_detail::Reader r(j, code, "prompts");
  PromptBundle p;
  p.main_prompt = r.get_or<std::string>("main_prompt", "");
  p.example_prompt = r.opt<std::string>("example_prompt");
  p.evaluation_prompt = r.opt<std::string>("evaluation_prompt");
  return p;
}

// ---------------------------------------------------------------------------
// Tree documents
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const ThoughtNode& n) {
  return {{"node_id", to_string(n.id)},
          {"parent_id", json_detail::opt_id(n.parent)},
          {"layer", n.layer},
          {"text", n.text},
          {"source", to_string(n.source)},
          {"score", json_detail::opt_json(n.score)},
          {"rank", json_detail::opt_json(n.rank)},
          {"expansion_state", to_string(n.expansion_state)},
          {"group_id", json_detail::opt_id(n.group)},
          {"children", json_detail::id_list(n.children)}};
}

inline nlohmann::json to_json(const ThoughtGroup& g) {
  nlohmann::json evidence = nlohmann::json::array();
  for (const auto& e : g.evidence) {
    evidence.push_back({{"pair", {to_string(e.first), to_string(e.second)}}, {"similarity", e.similarity}});
  }
  return {{"group_id", to_string(g.id)},
          {"member_ids", json_detail::id_list(g.members)},
          {"representative_id", to_string(g.representative)},
          {"method", to_string(g.method)},
          {"evidence", std::move(evidence)}};
}

inline nlohmann::json to_json(const LayerRecord& l) {
  nlohmann::json candidates = nlohmann::json::array();
  for (const auto& c : l.candidates) {
    candidates.push_back({{"text", c.text},
                          {"score", c.score},
                          {"source", to_string(c.source)},
                          {"node_id", json_detail::opt_id(c.node)}});
  }
  return {{"parent_id", to_string(l.parent)},
          {"expansion_id", l.expansion_id},
          {"dynamic", to_json(l.dynamic)},
          {"seed", std::to_string(l.seed)},
          {"candidates", std::move(candidates)},
          {"warnings", l.warnings},
          {"consistency", json_detail::opt_json(l.consistency)}};
}

inline nlohmann::json to_json(const ThoughtTree& tree) {
  const auto& s = tree.state();
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& [_, n] : s.nodes) nodes.push_back(to_json(n));
  nlohmann::json groups = nlohmann::json::array();
  for (const auto& [_, g] : s.groups) groups.push_back(to_json(g));
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : s.layers) layers.push_back(to_json(l));
  return {{"schema_version", kSchemaVersion},
          {"tree_id", s.tree_id},
          {"created_at", text::format_time(s.created_at)},
          {"settings", to_json(s.settings)},
          {"dynamic", to_json(s.dynamic)},
          {"prompts", to_json(s.prompts)},
          {"nodes", std::move(nodes)},
          {"groups", std::move(groups)},
          {"layers", std::move(layers)},
          {"preferred_path", json_detail::id_list(s.preferred_path)},
          {"active_path", json_detail::id_list(s.active_path)},
          {"next_node_id", to_string(NodeId{s.next_node})},
          {"next_group_id", to_string(GroupId{s.next_group})}};
}

inline std::string serialize_tree(const ThoughtTree& tree) { return to_json(tree).dump(2) + "\n"; }

namespace json_detail {

inline ThoughtNode node_from_json(const json& j) {
  Reader r(j, Errc::schema_mismatch, "node");
  ThoughtNode n;
  n.id = r.node_id("node_id");
  if (r.has("parent_id")) n.parent = r.node_id("parent_id");
  n.layer = r.get<int>("layer");
  n.text = r.get<std::string>("text");
  n.source = r.get_enum<ThoughtSource>("source");
  n.score = r.opt<double>("score");
  n.rank = r.opt<int>("rank");
  n.expansion_state = r.get_enum<ExpansionState>("expansion_state");
  if (r.has("group_id")) n.group = r.parse_group(r.get<std::string>("group_id"));
  n.children = r.node_ids("children");
  return n;
}

inline ThoughtGroup group_from_json(const json& j) {
  Reader r(j, Errc::schema_mismatch, "group");
  ThoughtGroup g;
  g.id = r.parse_group(r.get<std::string>("group_id"));
  g.members = r.node_ids("member_ids");
  g.representative = r.node_id("representative_id");
  g.method = r.get_enum<GroupingMethod>("method");
  for (const auto& e : r.at("evidence")) {
    Reader er(e, Errc::schema_mismatch, "evidence");
    auto pair = er.get<std::vector<std::string>>("pair");
    require(pair.size() == 2, Errc::schema_mismatch, "evidence.pair must hold two ids");
    g.evidence.push_back({er.parse_node(pair[0]), er.parse_node(pair[1]), er.get<double>("similarity")});
  }
  return g;
}

inline LayerRecord layer_from_json(const json& j) {
  Reader r(j, Errc::schema_mismatch, "layer");
  LayerRecord l;
  l.parent = r.node_id("parent_id");
  l.expansion_id = r.get<std::string>("expansion_id");
  l.dynamic = dynamic_from_json(r.at("dynamic"), Errc::schema_mismatch);
  auto seed = r.get<std::string>("seed");
  try {
    std::size_t used = 0;
    l.seed = std::stoull(seed, &used);
    require(used == seed.size(), Errc::schema_mismatch, "layer.seed is not a decimal integer");
  } catch (const std::logic_error&) {
    fail(Errc::schema_mismatch, "layer.seed is not a decimal integer");
  }
  for (const auto& c : r.at("candidates")) {
    Reader cr(c, Errc::schema_mismatch, "candidate");
    CandidateRecord rec;
    rec.text = cr.get<std::string>("text");
    rec.score = cr.get<double>("score");
    rec.source = cr.get_enum<ThoughtSource>("source");
    if (cr.has("node_id")) rec.node = cr.node_id("node_id");
    l.candidates.push_back(std::move(rec));
  }
  l.warnings = r.get<std::vector<std::string>>("warnings");
  l.consistency = r.opt<double>("consistency");
  return l;
}

}  // namespace json_detail

/// Rebuilds and fully validates a tree document. Future schema versions are refused.
inline ThoughtTree tree_from_json(const nlohmann::json& j) {
  json_detail::Reader r(j, Errc::schema_mismatch, "tree");
  auto version = r.get<int>("schema_version");
  require(version == kSchemaVersion, Errc::schema_mismatch,
          "unsupported schema_version " + std::to_string(version) + " (this build reads " +
              std::to_string(kSchemaVersion) + ")");
  TreeState s;
  s.tree_id = r.get<std::string>("tree_id");
  try {
    s.created_at = text::parse_time(r.get<std::string>("created_at"));
  } catch (const Error&) {
    fail(Errc::schema_mismatch, "tree.created_at is malformed");
  }
  s.settings = settings_from_json(r.at("settings"), Errc::schema_mismatch);
  s.dynamic = dynamic_from_json(r.at("dynamic"), Errc::schema_mismatch);
  s.prompts = prompts_from_json(r.at("prompts"), Errc::schema_mismatch);
  for (const auto& n : r.at("nodes")) {
    auto node = json_detail::node_from_json(n);
    auto id = node.id;
    require(s.nodes.emplace(id, std::move(node)).second, Errc::invalid_tree, "duplicate node " + to_string(id));
  }
  for (const auto& g : r.at("groups")) {
    auto group = json_detail::group_from_json(g);
    auto id = group.id;
    require(s.groups.emplace(id, std::move(group)).second, Errc::invalid_tree, "duplicate group " + to_string(id));
  }
  for (const auto& l : r.at("layers")) s.layers.push_back(json_detail::layer_from_json(l));
  s.preferred_path = r.node_ids("preferred_path");
  s.active_path = r.node_ids("active_path");
  s.next_node = r.node_id("next_node_id").value;
  s.next_group = r.parse_group(r.get<std::string>("next_group_id")).value;
  return ThoughtTree::restore(std::move(s));
}

inline ThoughtTree parse_tree(std::string_view document) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(document);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::schema_mismatch, std::string("tree document is not JSON: ") + e.what());
  }
  return tree_from_json(j);
}

}  // namespace itot
