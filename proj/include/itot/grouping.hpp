#pragma once

#include <algorithm>
#include <cmath>
#include <future>
#include <numeric>
#include <string>
#include <vector>

#include "itot/core.hpp"
#include "itot/providers.hpp"

namespace itot::grouping {

/// Symmetric m x m similarity matrix with a unit diagonal.
class SimilarityMatrix {
 public:
  explicit SimilarityMatrix(std::size_t m = 0) : m_(m), entries_(m * m, 0.0) {
    for (std::size_t i = 0; i < m; ++i) entries_[i * m + i] = 1.0;
  }

  std::size_t size() const { return m_; }
  double at(std::size_t i, std::size_t j) const { return entries_[i * m_ + j]; }

  /// Sets both (i,j) and (j,i); diagonal entries stay at 1.
  void set(std::size_t i, std::size_t j, double value) {
    require(i < m_ && j < m_, Errc::precondition, "similarity index out of range");
    require(value >= 0.0 && value <= 1.0, Errc::precondition, "similarity must lie in [0, 1]");
    if (i == j) return;
    entries_[i * m_ + j] = value;
    entries_[j * m_ + i] = value;
  }

 private:
  std::size_t m_;
  std::vector<double> entries_;
};

inline double cosine(const providers::EmbeddingVector& a, const providers::EmbeddingVector& b) {
  require(a.dimension() == b.dimension(), Errc::precondition, "embedding dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    dot += a.values[i] * b.values[i];
    na += a.values[i] * a.values[i];
    nb += b.values[i] * b.values[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

/// Pairwise similarity of `texts`: clamped cosine for embeddings, mutual entailment for logical.
/// Identical texts always score 1.
inline SimilarityMatrix pairwise_similarity(const std::vector<std::string>& texts, GroupingMethod method,
                                            const providers::Providers& providers) {
  require(!texts.empty(), Errc::precondition, "pairwise_similarity needs at least one text");
  require(method != GroupingMethod::none, Errc::precondition, "grouping method 'none' has no similarity");
  const std::size_t m = texts.size();
  SimilarityMatrix sim(m);

  if (method == GroupingMethod::embedding) {
    auto vectors = providers.require_embedder().embed(texts);
    require(vectors.size() == m, Errc::provider_unavailable, "embedding count mismatch");
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = i + 1; j < m; ++j) {
        double c = texts[i] == texts[j] ? 1.0 : cosine(vectors[i], vectors[j]);
        sim.set(i, j, std::clamp(c, 0.0, 1.0));
      }
    }
    return sim;
  }

  auto& nli = providers.require_nli();
  struct Pair {
    std::size_t i, j;
    std::future<double> forward, backward;
  };
  std::vector<Pair> pairs;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      if (texts[i] == texts[j]) {
        sim.set(i, j, 1.0);
        continue;
      }
      auto ask = [&nli, &texts](std::size_t p, std::size_t h) {
        return std::async(std::launch::async, [&nli, &texts, p, h] { return nli.nli(texts[p], texts[h]).entail_prob; });
      };
      pairs.push_back({i, j, ask(i, j), ask(j, i)});
    }
  }
  // Collect every future before rethrowing so no task outlives this frame.
  std::exception_ptr first_error;
  for (auto& p : pairs) {
    try {
      double f = p.forward.get();
      double b = p.backward.get();
      sim.set(p.i, p.j, std::clamp(std::min(f, b), 0.0, 1.0));
    } catch (...) {
      if (!first_error) first_error = std::current_exception();
      if (p.backward.valid()) p.backward.wait();
    }
  }
  if (first_error) std::rethrow_exception(first_error);
  return sim;
}

class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

struct PairSimilarity {
  std::size_t first = 0;
  std::size_t second = 0;
  double similarity = 0.0;

  bool operator==(const PairSimilarity&) const = default;
};

/// A group over input indices.
struct Cluster {
  std::vector<std::size_t> members;  // ascending
  std::size_t representative = 0;
  double score = 0.0;  // the representative's score
  std::vector<PairSimilarity> evidence;

  bool operator==(const Cluster&) const = default;
};

/// Connected components of the graph with an edge wherever similarity >= tau, ordered by
/// smallest member. The representative is the highest-scoring member (ties: lowest index).
inline std::vector<Cluster> group_thoughts(const std::vector<std::string>& texts, const std::vector<double>& scores,
                                           const SimilarityMatrix& sim, double tau) {
  require(tau >= 0.0 && tau <= 1.0, Errc::precondition, "grouping threshold must lie in [0, 1]");
  require(texts.size() == scores.size() && texts.size() == sim.size(), Errc::precondition,
          "texts, scores and similarity matrix disagree in size");
  const std::size_t m = texts.size();
  UnionFind uf(m);
  std::vector<PairSimilarity> edges;
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      if (sim.at(i, j) >= tau) {
        uf.unite(i, j);
        edges.push_back({i, j, sim.at(i, j)});
      }
    }
  }

  std::vector<Cluster> clusters;
  std::vector<std::size_t> slot(m, m);
  for (std::size_t i = 0; i < m; ++i) {
    auto root = uf.find(i);
    if (slot[root] == m) {
      slot[root] = clusters.size();
      clusters.push_back({{}, i, scores[i], {}});
    }
    auto& c = clusters[slot[root]];
    c.members.push_back(i);
    if (scores[i] > c.score) {
      c.representative = i;
      c.score = scores[i];
    }
  }
  for (const auto& e : edges) clusters[slot[uf.find(e.first)]].evidence.push_back(e);
  return clusters;
}

/// (m - groups) / (m - 1): 1 when every thought is equivalent, 0 when all are distinct.
inline double consistency_signal(std::size_t groups, std::size_t m) {
  require(m >= 1 && groups >= 1 && groups <= m, Errc::precondition, "groups must partition m >= 1 thoughts");
  if (m == 1) return 1.0;
  return static_cast<double>(m - groups) / static_cast<double>(m - 1);
}

inline double consistency_signal(const std::vector<Cluster>& clusters, std::size_t m) {
  std::size_t covered = 0;
  for (const auto& c : clusters) covered += c.members.size();
  require(covered == m, Errc::precondition, "clusters do not partition the thoughts");
  return consistency_signal(clusters.size(), m);
}

/// Turns index clusters into ThoughtGroups for the given node ids, numbering groups from `next`.
inline std::vector<ThoughtGroup> to_groups(const std::vector<Cluster>& clusters, const std::vector<NodeId>& ids,
                                           GroupingMethod method, GroupId& next) {
  std::vector<ThoughtGroup> groups;
  for (const auto& c : clusters) {
    ThoughtGroup g;
    g.id = next;
    next = GroupId{next.value + 1};
    g.method = method;
    for (auto i : c.members) g.members.push_back(ids.at(i));
    g.representative = ids.at(c.representative);
    for (const auto& e : c.evidence) g.evidence.push_back({ids.at(e.first), ids.at(e.second), e.similarity});
    groups.push_back(std::move(g));
  }
  return groups;
}

}  // namespace itot::grouping
