#pragma once

// Session layer shared by the HTTP API and the in-process CLI: creates and persists trees, runs
// expansions on worker threads and keeps each expansion's event log.

#include <array>
#include <condition_variable>
#include <future>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>

#include "itot/engine.hpp"
#include "itot/examples.hpp"
#include "itot/store.hpp"

namespace itot::service {

inline bool is_terminal(engine::Phase p) { return p == engine::Phase::done || p == engine::Phase::error; }

inline nlohmann::json to_json(const engine::StatusEvent& e) {
  return {{"tree_id", e.tree_id},
          {"expansion_id", e.expansion_id},
          {"phase", to_string(e.phase)},
          {"detail", e.detail},
          {"sequence_no", e.sequence_no},
          {"timestamp", text::format_time(e.timestamp)}};
}

inline engine::StatusEvent event_from_json(const nlohmann::json& j) {
  json_detail::Reader r(j, Errc::invalid_request, "event");
  engine::StatusEvent e;
  e.tree_id = r.get<std::string>("tree_id");
  e.expansion_id = r.get<std::string>("expansion_id");
  e.phase = r.get_enum<engine::Phase>("phase");
  e.detail = r.get<std::string>("detail");
  e.sequence_no = r.get<int>("sequence_no");
  e.timestamp = text::parse_time(r.get<std::string>("timestamp"));
  return e;
}

/// Append-only event sequence of one expansion; readers block until the next event arrives.
class EventLog {
 public:
  void publish(engine::StatusEvent e) {
    {
      std::lock_guard lock(mu_);
      finished_ = finished_ || is_terminal(e.phase);
      events_.push_back(std::move(e));
    }
    cv_.notify_all();
  }

  /// Event number `index` (0-based), waiting up to `timeout` for it to appear.
  std::optional<engine::StatusEvent> wait(std::size_t index, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return index < events_.size(); });
    if (index < events_.size()) return events_[index];
    return std::nullopt;
  }

  /// Blocks until the terminal event and returns the whole sequence.
  std::vector<engine::StatusEvent> wait_finished() const {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return finished_; });
    return events_;
  }

  std::vector<engine::StatusEvent> snapshot() const {
    std::lock_guard lock(mu_);
    return events_;
  }

  bool finished() const {
    std::lock_guard lock(mu_);
    return finished_;
  }

 private:
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::vector<engine::StatusEvent> events_;
  bool finished_ = false;
};

struct ServiceConfig {
  /// Id for a new tree; empty function means random ids.
  std::function<std::string(const store::TreeStore&)> new_tree_id;
  /// Creation time for new trees.
  std::function<Timestamp()> creation_clock = now_ms;
  /// Event timestamps.
  std::function<Timestamp()> clock = now_ms;
  LogSink log = default_log();
};

/// Deterministic ids "t0001", "t0002", ... skipping ids already in the store.
inline std::function<std::string(const store::TreeStore&)> sequential_ids() {
  auto counter = std::make_shared<std::atomic<int>>(0);
  return [counter](const store::TreeStore& s) {
    for (;;) {
      char buf[16];
      std::snprintf(buf, sizeof buf, "t%04d", ++*counter);
      if (!s.exists(buf)) return std::string(buf);
    }
  };
}

/// Fixed creation time used in fixture mode so tree documents are reproducible.
inline Timestamp fixed_creation_time() { return text::parse_time("2024-07-09T00:00:00.000Z"); }

namespace detail {

template <class Keys = std::initializer_list<std::string_view>>
void check_keys(const nlohmann::json& j, const Keys& allowed, Errc code, const std::string& where) {
  require(j.is_object(), code, where + " must be an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || a == key;
    require(ok, code, where + ": unknown field '" + key + "'");
  }
}

inline std::optional<std::string> nonempty(std::optional<std::string> s) {
  if (s && text::trim(*s).empty()) return std::nullopt;
  return s;
}

inline constexpr std::array<std::string_view, 9> kSettingsKeys = {
    "model_id",        "temperature",        "generation_method", "evaluation_method", "selection_method",
    "grouping_method", "grouping_threshold", "seed",              "vote_count"};

/// Accepts {generate_count, display_count} or the short {k, b}.
inline DynamicSettings dynamic_from_request(const nlohmann::json& j, DynamicSettings base) {
  check_keys(j, {"generate_count", "display_count", "k", "b"}, Errc::invalid_settings, "dynamic");
  json_detail::Reader r(j, Errc::invalid_settings, "dynamic");
  base = dynamic_from_json(j, Errc::invalid_settings, base);
  base.generate_count = r.get_or<int>("k", base.generate_count);
  base.display_count = r.get_or<int>("b", base.display_count);
  return base;
}

}  // namespace detail

/// What a create request asks for.
struct CreateRequest {
  PromptBundle prompts;
  TreeSettings settings;
  DynamicSettings dynamic;
};

/// Accepts {prompts, settings, dynamic} or an example bundle as served by the examples endpoint.
inline CreateRequest create_request_from_json(const nlohmann::json& body) {
  require(body.is_object(), Errc::invalid_request, "request body must be a JSON object");
  CreateRequest req;
  if (body.contains("prompts")) {
    detail::check_keys(body, {"prompts", "settings", "dynamic"}, Errc::invalid_request, "request");
    detail::check_keys(body.at("prompts"), {"main_prompt", "example_prompt", "evaluation_prompt"},
                       Errc::invalid_request, "prompts");
    req.prompts = prompts_from_json(body.at("prompts"));
  } else {
    detail::check_keys(body, {"title", "main_prompt", "example_prompt", "evaluation_prompt", "settings", "dynamic"},
                       Errc::invalid_request, "request");
    req.prompts = prompts_from_json(body);
  }
  req.prompts.example_prompt = detail::nonempty(req.prompts.example_prompt);
  req.prompts.evaluation_prompt = detail::nonempty(req.prompts.evaluation_prompt);
  if (body.contains("settings")) {
    detail::check_keys(body.at("settings"), detail::kSettingsKeys, Errc::invalid_settings, "settings");
    req.settings = settings_from_json(body.at("settings"));
  }
  if (body.contains("dynamic")) req.dynamic = detail::dynamic_from_request(body.at("dynamic"), {});
  return req;
}

class TreeService {
 public:
  TreeService(std::shared_ptr<store::TreeStore> store, providers::Providers providers, ServiceConfig config = {})
      : store_(std::move(store)), providers_(std::move(providers)), config_(std::move(config)) {}

  TreeService(const TreeService&) = delete;
  TreeService& operator=(const TreeService&) = delete;
  ~TreeService() { shutdown(); }

  ThoughtTree create(const CreateRequest& req) {
    std::lock_guard lock(create_mu_);
    TreeOrigin origin;
    if (config_.new_tree_id) origin.tree_id = config_.new_tree_id(*store_);
    origin.created_at = config_.creation_clock();
    auto tree = new_tree(req.prompts, req.settings, req.dynamic, origin);
    store_->save(tree);
    return tree;
  }

  ThoughtTree create(const nlohmann::json& body) { return create(create_request_from_json(body)); }

  ThoughtTree get(const std::string& tree_id) const { return store_->load(tree_id); }

  std::vector<store::HistoryEntry> history() const { return store_->list_history(); }

  /// Starts expanding a leaf; returns the expansion id whose events describe the run.
  std::string start_expand(const std::string& tree_id, NodeId node) {
    return start(tree_id, [&](const ThoughtTree& tree) {
      const auto& n = tree.node(node);
      require(n.expansion_state == ExpansionState::leaf, Errc::parent_already_expanded,
              to_string(node) + " already has children");
    }, [node, this](const ThoughtTree& tree, const engine::EventSink& sink, const engine::ExpandOptions& opts) {
      return engine::expand(tree, node, providers_, sink, opts).tree;
    });
  }

  /// Starts adding a user thought under an expanded node (and expanding it).
  std::string start_add(const std::string& tree_id, NodeId parent, const std::string& thought) {
    require(!text::trim(thought).empty(), Errc::empty_text, "thought text must be nonempty");
    return start(tree_id, [&](const ThoughtTree& tree) {
      require(!tree.node(parent).children.empty(), Errc::parent_not_expanded,
              to_string(parent) + " has no layer to join");
    }, [parent, thought, this](const ThoughtTree& tree, const engine::EventSink& sink,
                               const engine::ExpandOptions& opts) {
      return engine::add_user_thought(tree, parent, thought, providers_, sink, opts).tree;
    });
  }

  ThoughtTree toggle(const std::string& tree_id, NodeId node) {
    return mutate(tree_id, [&](const ThoughtTree& t) { return toggle_collapse(t, node); });
  }

  ThoughtTree patch_dynamic(const std::string& tree_id, const nlohmann::json& body) {
    return mutate(tree_id, [&](const ThoughtTree& t) {
      return update_dynamic(t, detail::dynamic_from_request(body, t.dynamic()));
    });
  }

  [[noreturn]] void patch_settings(const std::string& tree_id, const nlohmann::json&) {
    store_->load(tree_id);
    fail(Errc::settings_immutable, "initial settings are fixed once a tree is created; adjust k and b instead");
  }

  std::shared_ptr<const EventLog> events(const std::string& tree_id, const std::string& expansion_id) const {
    std::lock_guard lock(mu_);
    auto it = logs_.find(expansion_id);
    require(it != logs_.end() && it->second.tree_id == tree_id, Errc::not_found,
            "no expansion '" + expansion_id + "' for tree '" + tree_id + "'");
    return it->second.log;
  }

  bool busy(const std::string& tree_id) const {
    std::lock_guard lock(mu_);
    return busy_.contains(tree_id);
  }

  /// Refuses new expansions and waits for running ones to finish.
  void shutdown() {
    std::list<std::future<void>> running;
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
      running.swap(workers_);
    }
    for (auto& f : running) f.wait();
  }

  const providers::Providers& providers() const { return providers_; }

 private:
  using Runner = std::function<ThoughtTree(const ThoughtTree&, const engine::EventSink&, const engine::ExpandOptions&)>;

  struct LogEntry {
    std::string tree_id;
    std::shared_ptr<EventLog> log;
  };

  std::mutex& tree_mutex(const std::string& tree_id) {
    std::lock_guard lock(mu_);
    auto& m = tree_mu_[tree_id];
    if (!m) m = std::make_unique<std::mutex>();
    return *m;
  }

  template <class F>
  ThoughtTree mutate(const std::string& tree_id, F&& change) {
    std::lock_guard tree_lock(tree_mutex(tree_id));
    require(!busy(tree_id), Errc::expansion_in_progress, "tree '" + tree_id + "' is being expanded");
    auto next = change(store_->load(tree_id));
    store_->save(next);
    return next;
  }

  template <class Check>
  std::string start(const std::string& tree_id, Check&& check, Runner run) {
    auto& tree_mu = tree_mutex(tree_id);
    std::lock_guard tree_lock(tree_mu);
    auto tree = store_->load(tree_id);
    check(tree);

    auto log = std::make_shared<EventLog>();
    std::string expansion_id;
    {
      std::lock_guard lock(mu_);
      require(!stopping_, Errc::shutting_down, "service is shutting down");
      require(!busy_.contains(tree_id), Errc::expansion_in_progress, "tree '" + tree_id + "' is being expanded");
      expansion_id = engine::detail::default_expansion_id(tree);
      for (int retry = 2; logs_.contains(expansion_id); ++retry) {
        expansion_id = engine::detail::default_expansion_id(tree) + "-r" + std::to_string(retry);
      }
      busy_.insert(tree_id);
      logs_[expansion_id] = {tree_id, log};
      workers_.remove_if([](const std::future<void>& f) {
        return f.wait_for(std::chrono::seconds(0)) == std::future_status::ready;
      });
      workers_.push_back(std::async(std::launch::async, [this, tree = std::move(tree), expansion_id, log, run,
                                                         &tree_mu] { work(tree, expansion_id, log, run, tree_mu); }));
    }
    return expansion_id;
  }

  void work(const ThoughtTree& tree, const std::string& expansion_id, const std::shared_ptr<EventLog>& log,
            const Runner& run, std::mutex& tree_mu) {
    // The terminal event is published only after the result is stored and the tree is free again,
    // so a client reacting to it sees the new tree and may start the next expansion at once.
    std::optional<engine::StatusEvent> terminal;
    engine::EventSink sink = [&](const engine::StatusEvent& e) {
      if (is_terminal(e.phase)) {
        terminal = e;
      } else {
        log->publish(e);
      }
    };
    engine::ExpandOptions opts;
    opts.expansion_id = expansion_id;
    opts.clock = config_.clock;
    try {
      auto next = run(tree, sink, opts);
      std::lock_guard tree_lock(tree_mu);
      store_->save(next);
    } catch (const std::exception& e) {
      auto detail = engine::detail::describe(e);
      config_.log(LogLevel::warn, "expansion " + expansion_id + " failed: " + detail);
      if (!terminal || terminal->phase != engine::Phase::error) {
        int seq = terminal ? terminal->sequence_no : static_cast<int>(log->snapshot().size()) + 1;
        terminal = engine::StatusEvent{tree.id(), expansion_id, engine::Phase::error, detail, seq, config_.clock()};
      }
    }
    {
      std::lock_guard lock(mu_);
      busy_.erase(tree.id());
    }
    log->publish(*terminal);
  }

  std::shared_ptr<store::TreeStore> store_;
  providers::Providers providers_;
  ServiceConfig config_;

  mutable std::mutex mu_;
  std::mutex create_mu_;
  std::map<std::string, std::unique_ptr<std::mutex>> tree_mu_;
  std::set<std::string> busy_;
  std::map<std::string, LogEntry> logs_;
  std::list<std::future<void>> workers_;
  bool stopping_ = false;
};

}  // namespace itot::service
