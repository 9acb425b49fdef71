#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "lmd/graph.hpp"

namespace lmd {

/// Running per-relation sums of edge counts over every window observed so
/// far. A relation first seen at window t counts as zero in earlier windows.
class RelationStats {
 public:
  void observe(const WindowGraph& graph);

  std::uint32_t window_count() const { return windows_; }
  double mean(RelationId rel) const;
  /// Population standard deviation; 0 for constant (or unseen) relations.
  double stddev(RelationId rel) const;
  /// (count - mean) / stddev, or 0 when stddev is 0.
  double standardize(RelationId rel, std::uint32_t count) const;

 private:
  std::vector<std::uint64_t> sum_;
  std::vector<std::uint64_t> sum_squares_;
  std::uint32_t windows_ = 0;
};

/// Jaccard index of the node sets; two empty sets give 0.
double sim_nodes(const WindowGraph& a, const WindowGraph& b);

/// Cosine similarity of the standardized relation-count vectors over the
/// union of both relation sets. An all-zero vector gives 0.
double sim_relations(const WindowGraph& a, const WindowGraph& b, const RelationStats& stats);

/// sim_nodes + sim_relations, in [-1, 2].
double similarity(const WindowGraph& a, const WindowGraph& b, const RelationStats& stats);

struct RetrievalDecision {
  WindowIndex window = 0;
  /// Selected past ordinals, most similar first.
  std::vector<WindowIndex> selected;
  std::vector<double> selected_similarity;
  /// Similarity of every past window, indexed by ordinal.
  std::vector<double> candidate_similarity;
};

/// Ordinals of the `k` largest similarities. Ties prefer the more recent
/// (higher) ordinal. Returned most similar first.
std::vector<WindowIndex> top_k_by_similarity(std::span<const double> similarity_by_ordinal,
                                             std::size_t k);

/// Picks the `k` past windows most similar to `current`. `past` holds the
/// windows 0..t-1 in ordinal order; `stats` must already include `current`.
RetrievalDecision select_context(const WindowGraph& current, std::span<const WindowGraph> past,
                                 std::size_t k, const RelationStats& stats);

struct ContextPair {
  std::shared_ptr<const ContextGraph> short_term;
  std::shared_ptr<const ContextGraph> long_term;
  /// True when there is no past at all (t = 0).
  bool warm_up = false;
};

/// Builds short-term (union over the selected windows) and long-term (union
/// over every earlier window) contexts. Calls must come in non-decreasing
/// window order; the long-term union is extended incrementally.
class ContextAssembler {
 public:
  explicit ContextAssembler(std::span<const WindowGraph> store) : store_(store) {}

  ContextPair assemble(WindowIndex t, const RetrievalDecision& decision);

 private:
  std::span<const WindowGraph> store_;
  UnionAccumulator long_term_;
  WindowIndex merged_ = 0;
};

}  // namespace lmd
