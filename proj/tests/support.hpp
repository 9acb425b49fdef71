#pragma once

// Shared fixtures and brute-force reference implementations for the tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <set>
#include <vector>

#include "lmd/graph.hpp"
#include "lmd/scoring.hpp"

namespace lmd::testing {

inline EntityId node(std::uint32_t i) { return EntityId{i}; }
inline RelationId rel(std::uint32_t i) { return RelationId{i}; }
inline Edge edge(std::uint32_t u, std::uint32_t r, std::uint32_t v) { return {node(u), rel(r), node(v)}; }

/// `count` random edges over `nodes` entities and `relations` relation ids.
inline std::vector<Edge> random_edges(std::mt19937_64& rng, std::size_t count, std::uint32_t nodes,
                                      std::uint32_t relations, bool self_loops = true) {
  std::vector<Edge> out;
  while (out.size() < count) {
    const auto u = static_cast<std::uint32_t>(rng() % nodes);
    const auto v = static_cast<std::uint32_t>(rng() % nodes);
    if (!self_loops && u == v) continue;
    out.push_back(edge(u, static_cast<std::uint32_t>(rng() % relations), v));
  }
  return out;
}

inline double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

/// Plain set union of edge lists; nodes are endpoints.
struct BruteUnion {
  std::set<Edge> edges;
  std::set<EntityId> nodes;
  std::set<RelationId> relations;
};

inline BruteUnion brute_union(const std::vector<const WindowGraph*>& graphs) {
  BruteUnion u;
  for (const WindowGraph* g : graphs) {
    for (const Edge& e : g->edges()) {
      u.edges.insert(e);
      u.nodes.insert(e.src);
      u.nodes.insert(e.dst);
      u.relations.insert(e.rel);
    }
  }
  return u;
}

/// Softmax without max subtraction.
inline std::vector<double> direct_softmax(const std::vector<double>& g) {
  double sum = 0.0;
  for (double x : g) sum += std::exp(x);
  std::vector<double> p;
  for (double x : g) p.push_back(std::exp(x) / sum);
  return p;
}

/// Scorer returning a fixed value for every candidate.
class ConstantScorer : public Scorer {
 public:
  explicit ConstantScorer(double value = 0.0) : value_(value) {}
  void set_context(std::shared_ptr<const ContextGraph> c) override { context_ = std::move(c); }
  ScoreMatrix score_batch(std::span<const ScoreQuery> queries) override {
    ++calls;
    return ScoreMatrix(queries.size(), std::vector<double>(context_->node_count(), value_));
  }
  std::size_t calls = 0;

 private:
  double value_;
  std::shared_ptr<const ContextGraph> context_;
};

/// Deterministic pseudo-random raw scores derived from (anchor, rel,
/// direction, candidate); the head direction equals the tail direction
/// with the roles swapped, so inverse-relation semantics hold.
class HashScorer : public Scorer {
 public:
  void set_context(std::shared_ptr<const ContextGraph> c) override { context_ = std::move(c); }
  ScoreMatrix score_batch(std::span<const ScoreQuery> queries) override {
    ScoreMatrix rows;
    for (const ScoreQuery& q : queries) {
      std::vector<double> row;
      for (EntityId n : context_->nodes()) {
        const EntityId u = q.direction == Direction::kTail ? q.anchor : n;
        const EntityId v = q.direction == Direction::kTail ? n : q.anchor;
        row.push_back(value(u, q.rel, v));
      }
      rows.push_back(std::move(row));
    }
    return rows;
  }
  static double value(EntityId u, RelationId r, EntityId v) {
    std::uint64_t h = raw(u) * 0x9E3779B97F4A7C15ULL ^ (raw(r) + 1) * 0xC2B2AE3D27D4EB4FULL ^
                      (raw(v) + 7) * 0x165667B19E3779F9ULL;
    h ^= h >> 31;
    h *= 0xBF58476D1CE4E5B9ULL;
    h ^= h >> 29;
    return static_cast<double>(h % 10000) / 1000.0 - 5.0;
  }

 private:
  std::shared_ptr<const ContextGraph> context_;
};

inline std::shared_ptr<const ContextGraph> context_of(std::vector<Edge> edges) {
  return std::make_shared<const ContextGraph>(
      ContextGraph::from_parts({}, std::move(edges), {}, {}));
}

}  // namespace lmd::testing
