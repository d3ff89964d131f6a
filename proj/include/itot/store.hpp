#pragma once

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "itot/log.hpp"
#include "itot/serialize.hpp"

namespace itot::store {

struct HistoryEntry {
  std::string tree_id;
  std::string title;  // first 80 characters of the main prompt
  Timestamp created_at{};
  Timestamp last_modified{};
  int layer_count = 0;
  int node_count = 0;

  bool operator==(const HistoryEntry&) const = default;
};

inline HistoryEntry history_entry(const ThoughtTree& tree, Timestamp last_modified) {
  return {tree.id(),
          text::utf8_prefix(tree.prompts().main_prompt, 80),
          tree.created_at(),
          last_modified,
          static_cast<int>(tree.layers().size()),
          static_cast<int>(tree.nodes().size())};
}

inline nlohmann::json to_json(const HistoryEntry& h) {
  return {{"tree_id", h.tree_id},
          {"title", h.title},
          {"created_at", text::format_time(h.created_at)},
          {"last_modified", text::format_time(h.last_modified)},
          {"layer_count", h.layer_count},
          {"node_count", h.node_count}};
}

class TreeStore {
 public:
  virtual ~TreeStore() = default;
  virtual void save(const ThoughtTree& tree) = 0;
  virtual ThoughtTree load(const std::string& tree_id) const = 0;
  virtual bool exists(const std::string& tree_id) const = 0;
  /// Most recently modified first.
  virtual std::vector<HistoryEntry> list_history() const = 0;
};

/// Tree ids double as file names, so they are restricted to [A-Za-z0-9_-]{1,64}.
inline bool valid_tree_id(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-')) return false;
  }
  return true;
}

inline std::filesystem::path default_data_dir() {
  const char* env = std::getenv("ITOT_DATA_DIR");
  return env != nullptr && *env != '\0' ? std::filesystem::path(env) : std::filesystem::path("itot-data");
}

/// One "<tree_id>.json" document per tree plus "index.json" holding modification times.
/// Every file is replaced atomically by writing a temporary file and renaming it.
class FileTreeStore final : public TreeStore {
 public:
  explicit FileTreeStore(std::filesystem::path dir = default_data_dir(), LogSink log = default_log(),
                         std::function<Timestamp()> clock = now_ms)
      : dir_(std::move(dir)), log_(std::move(log)), clock_(std::move(clock)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    require(!ec && std::filesystem::is_directory(dir_), Errc::storage_io,
            "cannot create data directory " + dir_.string() + ": " + ec.message());
  }

  /// Test hook run after the temporary tree file is written and before it is renamed.
  std::function<void()> before_rename;

  const std::filesystem::path& dir() const { return dir_; }

  void save(const ThoughtTree& tree) override {
    require(valid_tree_id(tree.id()), Errc::storage_io, "tree id '" + tree.id() + "' is not storable");
    validate(tree);
    std::lock_guard lock(write_mu_);
    write_atomically(tree_path(tree.id()), serialize_tree(tree), before_rename);

    auto index = read_index();
    auto now = clock_();
    // Keep modification times strictly increasing so history order is total.
    for (const auto& [_, v] : index.items()) {
      auto t = text::parse_time(v.get<std::string>());
      if (t >= now) now = t + std::chrono::milliseconds(1);
    }
    index[tree.id()] = text::format_time(now);
    write_atomically(dir_ / "index.json", index.dump(2) + "\n", {});
  }

  ThoughtTree load(const std::string& tree_id) const override {
    require(valid_tree_id(tree_id), Errc::not_found, "no tree '" + tree_id + "'");
    auto path = tree_path(tree_id);
    std::ifstream in(path, std::ios::binary);
    if (!in) {
      require(!std::filesystem::exists(path), Errc::storage_io, "cannot read " + path.string());
      fail(Errc::not_found, "no tree '" + tree_id + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    require(!in.bad(), Errc::storage_io, "cannot read " + path.string());
    auto tree = parse_tree(buf.str());
    require(tree.id() == tree_id, Errc::schema_mismatch, path.string() + " holds tree '" + tree.id() + "'");
    return tree;
  }

  bool exists(const std::string& tree_id) const override {
    return valid_tree_id(tree_id) && std::filesystem::exists(tree_path(tree_id));
  }

  std::vector<HistoryEntry> list_history() const override {
    auto index = read_index();
    std::vector<HistoryEntry> out;
    std::error_code ec;
    std::set<std::string> ids;
    for (const auto& [id, _] : index.items()) ids.insert(id);
    for (const auto& entry : std::filesystem::directory_iterator(dir_, ec)) {
      auto name = entry.path().filename().string();
      if (entry.path().extension() == ".json" && name != "index.json") ids.insert(entry.path().stem().string());
    }
    require(!ec, Errc::storage_io, "cannot list " + dir_.string() + ": " + ec.message());

    for (const auto& id : ids) {
      if (!valid_tree_id(id)) continue;
      try {
        auto tree = load(id);
        Timestamp modified;
        if (index.contains(id)) {
          modified = text::parse_time(index.at(id).get<std::string>());
        } else {
          auto ft = std::filesystem::last_write_time(tree_path(id));
          modified = std::chrono::time_point_cast<std::chrono::milliseconds>(
              std::chrono::file_clock::to_sys(ft));
        }
        out.push_back(history_entry(tree, modified));
      } catch (const Error& e) {
        log_(LogLevel::warn, "history: skipping tree '" + id + "': " + e.what());
      }
    }
    std::sort(out.begin(), out.end(), [](const HistoryEntry& a, const HistoryEntry& b) {
      if (a.last_modified != b.last_modified) return a.last_modified > b.last_modified;
      return a.tree_id < b.tree_id;
    });
    return out;
  }

 private:
  std::filesystem::path tree_path(const std::string& id) const { return dir_ / (id + ".json"); }

  nlohmann::json read_index() const {
    auto path = dir_ / "index.json";
    std::ifstream in(path, std::ios::binary);
    if (!in) return nlohmann::json::object();
    try {
      auto j = nlohmann::json::parse(in);
      if (!j.is_object()) throw std::runtime_error("not an object");
      for (const auto& [_, v] : j.items()) text::parse_time(v.get<std::string>());
      return j;
    } catch (const std::exception& e) {
      log_(LogLevel::warn, "history index " + path.string() + " is unreadable, rebuilding: " + e.what());
      return nlohmann::json::object();
    }
  }

  static void write_atomically(const std::filesystem::path& target, const std::string& content,
                               const std::function<void()>& before_rename) {
    auto tmp = target;
    tmp += ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      out << content;
      out.flush();
      require(out.good(), Errc::storage_io, "cannot write " + tmp.string());
    }
    if (before_rename) before_rename();
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    require(!ec, Errc::storage_io, "cannot replace " + target.string() + ": " + ec.message());
  }

  std::filesystem::path dir_;
  LogSink log_;
  std::function<Timestamp()> clock_;
  std::mutex write_mu_;
};

}  // namespace itot::store
