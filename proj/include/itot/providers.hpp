#pragma once

/**
 * Model provider interfaces and their deterministic fakes.
 *
 * Three remote services back the engine: a chat LLM (generation and
 * self-evaluation), a sentence embedder and an NLI classifier (semantic
 * grouping). Real HTTP clients live in http_providers.hpp. The fakes here
 * answer purely from a versioned fixture document so a whole expansion
 * pipeline replays bit-exactly:
 *
 *   {
 *     "fixture_version": 1,
 *     "completions": { "<request digest>": { "call": "<call tag>", "responses": ["...", ...] } },
 *     "embeddings":  { "<text>": [0.1, ...] },
 *     "embedding_fallback": "hashing" | "none",
 *     "nli": [ { "premise": "...", "hypothesis": "...",
 *                "entailment": 0.9, "contradiction": 0.05, "neutral": 0.05 } ],
 *     "nli_fallback": "neutral" | "none"
 *   }
 *
 * A request digest covers model id, temperature, n, the call tag and every
 * message, so each logical call of a pipeline has its own fixture entry.
 */

#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "itot/error.hpp"
#include "itot/prompts.hpp"
#include "itot/text.hpp"

namespace itot::providers {

using prompts::MessageSequence;

struct CompletionRequest {
  MessageSequence messages;
  double temperature = 0.7;
  int n = 1;
  std::string model_id;
  std::chrono::milliseconds timeout{60'000};
  /// Names the logical call within a pipeline (e.g. "generate/0", "vote/2"); part of the digest.
  std::string call_tag;
};

inline void validate(const CompletionRequest& req) {
  require(req.n >= 1, Errc::precondition, "n must be >= 1");
  require(std::isfinite(req.temperature) && req.temperature >= 0.0 && req.temperature <= 2.0, Errc::precondition,
          "temperature must lie in [0, 2]");
  require(!req.messages.empty() && req.messages.front().role == prompts::Role::system, Errc::precondition,
          "messages must start with a system message");
}

/// Stable 16-hex-digit digest of everything that determines a completion.
inline std::string digest(const CompletionRequest& req) {
  nlohmann::json j;
  j["call_tag"] = req.call_tag;
  j["model_id"] = req.model_id;
  j["n"] = req.n;
  j["temperature"] = req.temperature;
  auto& msgs = j["messages"] = nlohmann::json::array();
  for (const auto& m : req.messages) msgs.push_back({std::string(to_string(m.role)), m.content});
  return text::hex64(text::fnv1a(j.dump()));
}

struct EmbeddingVector {
  std::vector<double> values;

  std::size_t dimension() const noexcept { return values.size(); }
  bool operator==(const EmbeddingVector&) const = default;
};

struct NliVerdict {
  std::string premise;
  std::string hypothesis;
  double entail_prob = 0.0;
  double contradict_prob = 0.0;
  double neutral_prob = 1.0;
};

inline void validate(const NliVerdict& v) {
  for (double p : {v.entail_prob, v.contradict_prob, v.neutral_prob}) {
    require(std::isfinite(p) && p >= 0.0 && p <= 1.0, Errc::provider_unavailable, "NLI probability out of [0,1]");
  }
  require(std::abs(v.entail_prob + v.contradict_prob + v.neutral_prob - 1.0) <= 1e-6, Errc::provider_unavailable,
          "NLI probabilities do not sum to 1");
}

class ChatModel {
 public:
  virtual ~ChatModel() = default;
  /// Exactly `req.n` completions in provider order, or an error.
  virtual std::vector<std::string> complete(const CompletionRequest& req) = 0;
};

class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<EmbeddingVector> embed(std::span<const std::string> texts) = 0;
};

class NliModel {
 public:
  virtual ~NliModel() = default;
  virtual NliVerdict nli(const std::string& premise, const std::string& hypothesis) = 0;
};

/// The three services an engine run needs; any may be null when unused by the tree's settings.
struct Providers {
  std::shared_ptr<ChatModel> chat;
  std::shared_ptr<Embedder> embedder;
  std::shared_ptr<NliModel> nli;

  ChatModel& require_chat() const {
    require(chat != nullptr, Errc::config_invalid, "no chat model configured");
    return *chat;
  }
  Embedder& require_embedder() const {
    require(embedder != nullptr, Errc::config_invalid, "no embedding service configured");
    return *embedder;
  }
  NliModel& require_nli() const {
    require(nli != nullptr, Errc::config_invalid, "no NLI service configured");
    return *nli;
  }
};

namespace detail {
inline void check_embed_input(std::span<const std::string> texts) {
  require(!texts.empty(), Errc::precondition, "embed needs at least one text");
  for (const auto& t : texts) require(!t.empty(), Errc::precondition, "embed texts must be nonempty");
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Fakes
// ---------------------------------------------------------------------------

/// Deterministic bag-of-words embedder: each ASCII-case-folded token adds weight to a hashed
/// basis direction, and the sum is L2-normalised. Texts equal up to ASCII case and punctuation
/// map to identical vectors; texts without a shared bucket are orthogonal.
class HashingEmbedder final : public Embedder {
 public:
  explicit HashingEmbedder(std::size_t dimension = 256) : dimension_(dimension) {}

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
    detail::check_embed_input(texts);
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed_one(t));
    return out;
  }

  EmbeddingVector embed_one(std::string_view text) const {
    std::vector<double> v(dimension_, 0.0);
    std::string token;
    auto flush = [&] {
      if (token.empty()) return;
      v[text::fnv1a(token) % dimension_] += 1.0;
      token.clear();
    };
    for (char c : text) {
      auto u = static_cast<unsigned char>(c);
      if (u >= 0x80 || std::isalnum(u)) {
        token.push_back(static_cast<char>(u < 0x80 ? std::tolower(u) : u));
      } else {
        flush();
      }
    }
    flush();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) {
      // Punctuation-only text: fall back to the raw text's own direction.
      v[text::fnv1a(text) % dimension_] = 1.0;
      norm = 1.0;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return {std::move(v)};
  }

 private:
  std::size_t dimension_;
};

struct Fixtures {
  struct Completion {
    std::string call;
    std::vector<std::string> responses;
  };
  std::map<std::string, Completion> completions;
  std::map<std::string, std::vector<double>> embeddings;
  bool hashing_embedding_fallback = true;
  std::map<std::pair<std::string, std::string>, NliVerdict> nli;
  bool neutral_nli_fallback = false;
};

inline constexpr int kFixtureVersion = 1;

inline Fixtures fixtures_from_json(const nlohmann::json& j) {
  require(j.is_object() && j.value("fixture_version", 0) == kFixtureVersion, Errc::config_invalid,
          "fixture document must declare fixture_version " + std::to_string(kFixtureVersion));
  Fixtures f;
  try {
    const auto comps = j.value("completions", nlohmann::json::object());
    const auto embs = j.value("embeddings", nlohmann::json::object());
    for (const auto& [digest, entry] : comps.items()) {
      f.completions[digest] = {entry.value("call", ""), entry.at("responses").get<std::vector<std::string>>()};
    }
    for (const auto& [text, vec] : embs.items()) {
      f.embeddings[text] = vec.get<std::vector<double>>();
    }
    f.hashing_embedding_fallback = j.value("embedding_fallback", "hashing") == "hashing";
    for (const auto& e : j.value("nli", nlohmann::json::array())) {
      NliVerdict v{e.at("premise").get<std::string>(), e.at("hypothesis").get<std::string>(),
                   e.at("entailment").get<double>(), e.at("contradiction").get<double>(),
                   e.at("neutral").get<double>()};
      validate(v);
      f.nli[{v.premise, v.hypothesis}] = v;
    }
    f.neutral_nli_fallback = j.value("nli_fallback", "none") == "neutral";
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::config_invalid, std::string("malformed fixture document: ") + e.what());
  } catch (const Error& e) {
    fail(Errc::config_invalid, "malformed fixture document: " + e.detail());
  }
  return f;
}

inline nlohmann::json fixtures_to_json(const Fixtures& f) {
  nlohmann::json j;
  j["fixture_version"] = kFixtureVersion;
  auto& comps = j["completions"] = nlohmann::json::object();
  for (const auto& [digest, c] : f.completions) comps[digest] = {{"call", c.call}, {"responses", c.responses}};
  auto& embs = j["embeddings"] = nlohmann::json::object();
  for (const auto& [text, vec] : f.embeddings) embs[text] = vec;
  j["embedding_fallback"] = f.hashing_embedding_fallback ? "hashing" : "none";
  auto& nli = j["nli"] = nlohmann::json::array();
  for (const auto& [_, v] : f.nli) {
    nli.push_back({{"premise", v.premise},
                   {"hypothesis", v.hypothesis},
                   {"entailment", v.entail_prob},
                   {"contradiction", v.contradict_prob},
                   {"neutral", v.neutral_prob}});
  }
  j["nli_fallback"] = f.neutral_nli_fallback ? "neutral" : "none";
  return j;
}

inline Fixtures load_fixtures(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), Errc::config_invalid, "cannot open fixture file " + path);
  try {
    return fixtures_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::config_invalid, "fixture file " + path + " is not JSON: " + e.what());
  }
}

inline void save_fixtures(const Fixtures& f, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), Errc::storage_io, "cannot write fixture file " + path);
  out << fixtures_to_json(f).dump(2) << '\n';
}

/// Chat model answering only from recorded fixtures.
class ScriptedChatModel final : public ChatModel {
 public:
  explicit ScriptedChatModel(std::shared_ptr<const Fixtures> fixtures) : fixtures_(std::move(fixtures)) {}

  std::vector<std::string> complete(const CompletionRequest& req) override {
    validate(req);
    auto d = digest(req);
    auto it = fixtures_->completions.find(d);
    if (it == fixtures_->completions.end()) {
      fail(Errc::fixture_miss, "no fixture for request " + d + " (call '" + req.call_tag + "')");
    }
    if (static_cast<int>(it->second.responses.size()) != req.n) {
      fail(Errc::fixture_miss, "fixture " + d + " holds " + std::to_string(it->second.responses.size()) +
                                   " responses, request asked for " + std::to_string(req.n));
    }
    return it->second.responses;
  }

 private:
  std::shared_ptr<const Fixtures> fixtures_;
};

/// Embeddings from the fixture table, falling back to HashingEmbedder when allowed.
class FixtureEmbedder final : public Embedder {
 public:
  explicit FixtureEmbedder(std::shared_ptr<const Fixtures> fixtures) : fixtures_(std::move(fixtures)) {}

  std::vector<EmbeddingVector> embed(std::span<const std::string> texts) override {
    detail::check_embed_input(texts);
    std::vector<EmbeddingVector> out;
    for (const auto& t : texts) {
      auto it = fixtures_->embeddings.find(t);
      if (it != fixtures_->embeddings.end()) {
        out.push_back({it->second});
      } else if (fixtures_->hashing_embedding_fallback) {
        out.push_back(hashing_.embed_one(t));
      } else {
        fail(Errc::fixture_miss, "no embedding fixture for '" + text::utf8_prefix(t, 40) + "'");
      }
    }
    for (const auto& v : out) {
      require(v.dimension() == out.front().dimension(), Errc::config_invalid, "fixture embeddings differ in dimension");
    }
    return out;
  }

 private:
  std::shared_ptr<const Fixtures> fixtures_;
  HashingEmbedder hashing_;
};

/// NLI verdicts from the fixture table. Identical texts always entail each other.
class FixtureNli final : public NliModel {
 public:
  explicit FixtureNli(std::shared_ptr<const Fixtures> fixtures) : fixtures_(std::move(fixtures)) {}

  NliVerdict nli(const std::string& premise, const std::string& hypothesis) override {
    require(!premise.empty() && !hypothesis.empty(), Errc::precondition, "NLI texts must be nonempty");
    auto it = fixtures_->nli.find({premise, hypothesis});
    if (it != fixtures_->nli.end()) return it->second;
    if (premise == hypothesis) return {premise, hypothesis, 1.0, 0.0, 0.0};
    if (fixtures_->neutral_nli_fallback) return {premise, hypothesis, 0.0, 0.0, 1.0};
    fail(Errc::fixture_miss, "no NLI fixture for ('" + text::utf8_prefix(premise, 40) + "', '" +
                                 text::utf8_prefix(hypothesis, 40) + "')");
  }

 private:
  std::shared_ptr<const Fixtures> fixtures_;
};

/// Provider handle that replays a fixture document.
inline Providers scripted_provider(Fixtures fixtures) {
  auto shared = std::make_shared<const Fixtures>(std::move(fixtures));
  return Providers{std::make_shared<ScriptedChatModel>(shared), std::make_shared<FixtureEmbedder>(shared),
                   std::make_shared<FixtureNli>(shared)};
}

/// Wraps a chat model and records every answered request as a fixture entry.
class RecordingChatModel final : public ChatModel {
 public:
  explicit RecordingChatModel(std::shared_ptr<ChatModel> inner) : inner_(std::move(inner)) {}

  std::vector<std::string> complete(const CompletionRequest& req) override {
    auto texts = inner_->complete(req);
    std::lock_guard lock(mu_);
    recorded_[digest(req)] = {req.call_tag, texts};
    return texts;
  }

  std::map<std::string, Fixtures::Completion> recorded() const {
    std::lock_guard lock(mu_);
    return recorded_;
  }

 private:
  std::shared_ptr<ChatModel> inner_;
  mutable std::mutex mu_;
  std::map<std::string, Fixtures::Completion> recorded_;
};

}  // namespace itot::providers
