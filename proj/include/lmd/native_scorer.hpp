#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "lmd/scoring.hpp"

namespace lmd {

/// Deterministic common-neighbor link predictor used when no model is
/// available:
///   g(u, r, v; H) = |N(u) ∩ N(v)| + 2 * [(u, r, v) in H]
/// N(x) is x's neighbor set in the undirected projection of H (a self-loop
/// makes x its own neighbor). Head-direction rows use the same formula with
/// membership tested on the forward triple.
class NativeScorer final : public Scorer {
 public:
  void set_context(std::shared_ptr<const ContextGraph> context) override;

  /// Throws Error(kInvalidArgument) when a query anchor is not a context node.
  ScoreMatrix score_batch(std::span<const ScoreQuery> queries) override;

  /// Number of index rebuilds; a context with an unchanged content hash is reused.
  std::uint64_t rebuilds() const { return rebuilds_; }

 private:
  std::vector<double> row(const ScoreQuery& query) const;

  std::shared_ptr<const ContextGraph> context_;
  std::uint64_t hash_ = 0;
  std::uint64_t rebuilds_ = 0;
  // Undirected adjacency by node position, sorted and unique.
  std::vector<std::vector<std::uint32_t>> neighbors_;
  // (position, relation) -> positions reached by out-edges / in-edges.
  std::map<std::pair<std::uint32_t, RelationId>, std::vector<std::uint32_t>> out_;
  std::map<std::pair<std::uint32_t, RelationId>, std::vector<std::uint32_t>> in_;
};

}  // namespace lmd
