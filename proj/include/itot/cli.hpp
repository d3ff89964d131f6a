#pragma once

// Command-line driver: create trees, expand nodes and print them, in-process or against a server.

#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "itot/api.hpp"
#include "itot/api_client.hpp"

namespace itot::cli {

/// The operations the commands need, served in-process or over HTTP.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual ThoughtTree create(const nlohmann::json& request) = 0;
  virtual ThoughtTree get(const std::string& tree_id) = 0;
  /// Runs an expansion to completion; returns the resulting tree.
  virtual ThoughtTree expand(const std::string& tree_id, NodeId node) = 0;
  virtual ThoughtTree add(const std::string& tree_id, NodeId parent, const std::string& text) = 0;
};

class LocalBackend final : public Backend {
 public:
  explicit LocalBackend(std::shared_ptr<service::TreeService> service) : service_(std::move(service)) {}

  ThoughtTree create(const nlohmann::json& request) override { return service_->create(request); }
  ThoughtTree get(const std::string& tree_id) override { return service_->get(tree_id); }
  ThoughtTree expand(const std::string& tree_id, NodeId node) override {
    return finish(tree_id, service_->start_expand(tree_id, node));
  }
  ThoughtTree add(const std::string& tree_id, NodeId parent, const std::string& text) override {
    return finish(tree_id, service_->start_add(tree_id, parent, text));
  }

 private:
  ThoughtTree finish(const std::string& tree_id, const std::string& expansion_id) {
    auto events = service_->events(tree_id, expansion_id)->wait_finished();
    if (events.back().phase == engine::Phase::error) {
      throw error_from_text(events.back().detail, Errc::generation_failed);
    }
    return service_->get(tree_id);
  }

  std::shared_ptr<service::TreeService> service_;
};

class RemoteBackend final : public Backend {
 public:
  explicit RemoteBackend(const std::string& base_url) : client_(base_url) {}

  ThoughtTree create(const nlohmann::json& request) override {
    return tree_from_json(api::expect_status(client_.post("/api/trees", request), 201));
  }
  ThoughtTree get(const std::string& tree_id) override {
    return tree_from_json(api::expect_status(client_.get("/api/trees/" + tree_id), 200));
  }
  ThoughtTree expand(const std::string& tree_id, NodeId node) override {
    return finish(tree_id, client_.post(node_path(tree_id, node) + "/expand", nlohmann::json::object()));
  }
  ThoughtTree add(const std::string& tree_id, NodeId parent, const std::string& text) override {
    return finish(tree_id, client_.post(node_path(tree_id, parent) + "/thoughts", {{"text", text}}));
  }

 private:
  static std::string node_path(const std::string& tree_id, NodeId node) {
    return "/api/trees/" + tree_id + "/nodes/" + to_string(node);
  }

  ThoughtTree finish(const std::string& tree_id, const api::Reply& accepted) {
    const auto& body = api::expect_status(accepted, 202);
    auto events = client_.events(tree_id, body.at("expansion_id").get<std::string>());
    require(!events.empty() && service::is_terminal(events.back().phase), Errc::provider_unavailable,
            "event stream ended early");
    if (events.back().phase == engine::Phase::error) {
      throw error_from_text(events.back().detail, Errc::generation_failed);
    }
    return get(tree_id);
  }

  api::ApiClient client_;
};

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline std::string format_score(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v;
  return s.str();
}

/// One node: path markers, id, rank, score, group and text.
inline std::string node_line(const ThoughtTree& tree, const ThoughtNode& n, int depth) {
  const auto& s = tree.state();
  auto on = [&](const std::vector<NodeId>& path) { return std::find(path.begin(), path.end(), n.id) != path.end(); };
  std::string line(static_cast<std::size_t>(depth) * 2, ' ');
  line += on(s.preferred_path) ? '*' : ' ';
  line += on(s.active_path) ? '>' : ' ';
  line += ' ' + to_string(n.id);
  if (n.rank) line += " #" + std::to_string(*n.rank);
  if (n.score) line += " " + format_score(*n.score);
  if (n.group) {
    auto size = tree.groups().at(*n.group).members.size();
    line += " " + to_string(*n.group);
    if (size > 1) line += " x" + std::to_string(size);
  }
  if (n.source == ThoughtSource::user && n.parent) line += " (user)";
  if (n.expansion_state == ExpansionState::collapsed) {
    line += " [collapsed, " + std::to_string(n.children.size()) + " hidden]";
  }
  line += "  " + text::single_line(n.text);
  return line;
}

/// Children in rank order; unranked (grouped-away) children follow in id order.
inline std::vector<NodeId> display_order(const ThoughtTree& tree, const ThoughtNode& n) {
  auto kids = n.children;
  std::stable_sort(kids.begin(), kids.end(), [&](NodeId a, NodeId b) {
    auto ra = tree.node(a).rank.value_or(std::numeric_limits<int>::max());
    auto rb = tree.node(b).rank.value_or(std::numeric_limits<int>::max());
    if (ra != rb) return ra < rb;
    return a.value < b.value;
  });
  return kids;
}

inline void render_subtree(const ThoughtTree& tree, NodeId id, int depth, std::ostream& out) {
  const auto& n = tree.node(id);
  out << node_line(tree, n, depth) << "\n";
  if (n.expansion_state == ExpansionState::collapsed) return;
  for (auto child : display_order(tree, n)) render_subtree(tree, child, depth + 1, out);
}

inline void render_tree(const ThoughtTree& tree, std::ostream& out) { render_subtree(tree, NodeId{0}, 0, out); }

/// The layer most recently attached below `parent`, with its consistency and warnings.
inline void render_layer(const ThoughtTree& tree, NodeId parent, std::ostream& out) {
  const LayerRecord* record = nullptr;
  for (const auto& l : tree.layers()) {
    if (l.parent == parent) record = &l;
  }
  out << node_line(tree, tree.node(parent), 0) << "\n";
  for (auto child : display_order(tree, tree.node(parent))) out << node_line(tree, tree.node(child), 1) << "\n";
  if (record == nullptr) return;
  out << "expansion " << record->expansion_id;
  if (record->consistency) out << ", consistency " << format_score(*record->consistency);
  out << "\n";
  for (const auto& w : record->warnings) out << "warning: " << w << "\n";
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), Errc::invalid_request, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  auto s = buf.str();
  while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
  return s;
}

inline NodeId node_arg(const std::string& s) {
  if (s == "root") return NodeId{0};
  try {
    return parse_node_id(s);
  } catch (const Error&) {
    fail(Errc::unknown_node, "'" + s + "' is not a node id");
  }
}

struct Options {
  std::string data_dir;
  std::string fake;
  std::string remote;
  std::string host = "127.0.0.1";
  int port = -1;

  // new
  std::string main_prompt;
  std::string example_file;
  std::string eval_file;
  int example = 0;
  std::optional<std::string> model;
  std::optional<double> temperature;
  std::optional<std::string> generation;
  std::optional<std::string> evaluation;
  std::optional<std::string> selection;
  std::optional<std::string> grouping;
  std::optional<double> threshold;
  std::optional<std::uint64_t> seed;
  std::optional<int> votes;
  std::optional<int> k;
  std::optional<int> b;

  std::string tree_id;
  std::string node;
  std::string text;
  bool json = false;
};

/// Request body for `new`: an example bundle (if chosen) overlaid with the given flags.
inline nlohmann::json new_request(const Options& o) {
  nlohmann::json prompts = nlohmann::json::object();
  nlohmann::json settings = nlohmann::json::object();
  nlohmann::json dynamic = nlohmann::json::object();
  if (o.example > 0) {
    auto tasks = example_tasks();
    require(o.example <= static_cast<int>(tasks.size()), Errc::invalid_request,
            "there are " + std::to_string(tasks.size()) + " examples");
    const auto& t = tasks[static_cast<std::size_t>(o.example - 1)];
    prompts = itot::to_json(t.prompts);
    settings = itot::to_json(t.settings);
    dynamic = itot::to_json(t.dynamic);
  }
  if (!o.main_prompt.empty()) prompts["main_prompt"] = o.main_prompt;
  if (!o.example_file.empty()) prompts["example_prompt"] = read_text_file(o.example_file);
  if (!o.eval_file.empty()) prompts["evaluation_prompt"] = read_text_file(o.eval_file);
  require(prompts.contains("main_prompt"), Errc::empty_main_prompt, "--main is required unless --example is given");
  if (o.model) settings["model_id"] = *o.model;
  if (o.temperature) settings["temperature"] = *o.temperature;
  if (o.generation) settings["generation_method"] = *o.generation;
  if (o.evaluation) settings["evaluation_method"] = *o.evaluation;
  if (o.selection) settings["selection_method"] = *o.selection;
  if (o.grouping) settings["grouping_method"] = *o.grouping;
  if (o.threshold) settings["grouping_threshold"] = *o.threshold;
  if (o.seed) settings["seed"] = *o.seed;
  if (o.votes) settings["vote_count"] = *o.votes;
  if (o.k) dynamic["generate_count"] = *o.k;
  if (o.b) dynamic["display_count"] = *o.b;
  return {{"prompts", prompts}, {"settings", settings}, {"dynamic", dynamic}};
}

inline std::shared_ptr<service::TreeService> make_service(const Options& o, LogSink log) {
  std::filesystem::path dir = o.data_dir.empty() ? store::default_data_dir() : std::filesystem::path(o.data_dir);
  auto store = std::make_shared<store::FileTreeStore>(dir, log);
  service::ServiceConfig cfg;
  cfg.log = log;
  providers::Providers providers;
  auto env_fake = providers::detail::env_or("ITOT_FAKE_PROVIDERS") == "1";
  if (!o.fake.empty()) {
    providers = providers::scripted_provider(providers::load_fixtures(o.fake));
  } else {
    providers = api::providers_for_environment();
  }
  if (!o.fake.empty() || env_fake) {
    // Fixture runs are reproducible: sequential tree ids and a fixed creation time.
    cfg.new_tree_id = service::sequential_ids();
    cfg.creation_clock = service::fixed_creation_time;
  }
  return std::make_shared<service::TreeService>(std::move(store), std::move(providers), std::move(cfg));
}

inline std::unique_ptr<Backend> make_backend(const Options& o, LogSink log) {
  if (!o.remote.empty()) return std::make_unique<RemoteBackend>(o.remote);
  return std::make_unique<LocalBackend>(make_service(o, std::move(log)));
}

/// Serves until SIGINT or SIGTERM, then finishes running expansions and exits.
inline int serve(const Options& o, LogSink log, std::ostream& out) {
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  auto cfg = api::server_config_from_environment();
  if (o.port >= 0) cfg.port = o.port;
  cfg.host = o.host;
  api::ApiServer server(make_service(o, log), cfg, log);
  int port = server.start();
  out << "serving on http://" << cfg.host << ":" << port << std::endl;
  int sig = 0;
  sigwait(&signals, &sig);
  log(LogLevel::info, "signal " + std::to_string(sig) + ": shutting down");
  server.stop();
  return 0;
}

inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interactive tree-of-thoughts driver"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--data-dir", o.data_dir, "Tree storage directory (default $ITOT_DATA_DIR or ./itot-data)");
  app.add_option("--fake", o.fake, "Replay providers from a fixture file");
  app.add_option("--remote", o.remote, "Use a running server, e.g. http://127.0.0.1:8080");

  auto* cmd_new = app.add_subcommand("new", "Create a tree and print its id");
  cmd_new->add_option("--main", o.main_prompt, "Main prompt");
  cmd_new->add_option("--example-file", o.example_file, "File holding the example prompt");
  cmd_new->add_option("--eval-file", o.eval_file, "File holding the evaluation prompt");
  cmd_new->add_option("--example", o.example, "Start from example bundle N (see `examples`)");
  cmd_new->add_option("--model", o.model, "Model id");
  cmd_new->add_option("--temperature", o.temperature, "Sampling temperature");
  cmd_new->add_option("--generation", o.generation, "sample | propose");
  cmd_new->add_option("--evaluation", o.evaluation, "comparative | individual");
  cmd_new->add_option("--selection", o.selection, "greedy | sample");
  cmd_new->add_option("--grouping", o.grouping, "embedding | logical | none");
  cmd_new->add_option("--threshold", o.threshold, "Grouping threshold");
  cmd_new->add_option("--seed", o.seed, "Selection seed");
  cmd_new->add_option("--votes", o.votes, "Votes per comparative evaluation");
  cmd_new->add_option("-k,--generate-count", o.k, "Thoughts generated per expansion");
  cmd_new->add_option("-b,--display-count", o.b, "Thoughts shown per expansion");

  auto* cmd_expand = app.add_subcommand("expand", "Expand a leaf and print the new layer");
  cmd_expand->add_option("tree", o.tree_id)->required();
  cmd_expand->add_option("node", o.node)->required();

  auto* cmd_add = app.add_subcommand("add", "Add your own thought under an expanded node and expand it");
  cmd_add->add_option("tree", o.tree_id)->required();
  cmd_add->add_option("node", o.node)->required();
  cmd_add->add_option("--text", o.text, "The thought")->required();

  auto* cmd_show = app.add_subcommand("show", "Print a tree (* preferred path, > active path)");
  cmd_show->add_option("tree", o.tree_id)->required();
  cmd_show->add_flag("--json", o.json, "Print the tree document instead");

  auto* cmd_examples = app.add_subcommand("examples", "List the example bundles");
  cmd_examples->add_flag("--json", o.json, "Print the bundles as JSON");

  auto* cmd_serve = app.add_subcommand("serve", "Run the HTTP API");
  cmd_serve->add_option("--host", o.host, "Listen address");
  cmd_serve->add_option("--port", o.port, "Port (default $ITOT_PORT or 8080; 0 picks one)");

  std::vector<const char*> argv{"itot"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  LogSink log = [&err](LogLevel level, std::string_view msg) {
    if (level >= LogLevel::warn) err << to_string(level) << ": " << msg << "\n";
  };
  try {
    if (cmd_examples->parsed()) {
      auto tasks = example_tasks();
      if (o.json) {
        nlohmann::json list = nlohmann::json::array();
        for (const auto& t : tasks) list.push_back(itot::to_json(t));
        out << list.dump(2) << "\n";
      } else {
        for (std::size_t i = 0; i < tasks.size(); ++i) {
          out << i + 1 << ". " << tasks[i].title << "  " << text::utf8_prefix(tasks[i].prompts.main_prompt, 60)
              << "\n";
        }
      }
      return 0;
    }
    if (cmd_serve->parsed()) return serve(o, log, out);

    auto backend = make_backend(o, log);
    if (cmd_new->parsed()) {
      out << backend->create(new_request(o)).id() << "\n";
    } else if (cmd_expand->parsed()) {
      auto node = node_arg(o.node);
      render_layer(backend->expand(o.tree_id, node), node, out);
    } else if (cmd_add->parsed()) {
      auto parent = node_arg(o.node);
      auto tree = backend->add(o.tree_id, parent, o.text);
      render_layer(tree, tree.state().active_path.back(), out);
    } else if (cmd_show->parsed()) {
      auto tree = backend->get(o.tree_id);
      if (o.json) {
        out << serialize_tree(tree);
      } else {
        render_tree(tree, out);
      }
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.token() << ": " << e.detail() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace itot::cli
