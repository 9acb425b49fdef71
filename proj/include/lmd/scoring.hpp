#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "lmd/graph.hpp"
#include "lmd/ingest.hpp"

namespace lmd {

enum class Direction : std::uint8_t {
  kTail,  // anchor is the head; score every candidate tail
  kHead,  // anchor is the tail; score every candidate head (reciprocal relation)
};

struct ScoreQuery {
  EntityId anchor;
  RelationId rel;
  Direction direction = Direction::kTail;

  auto operator<=>(const ScoreQuery&) const = default;
};

/// Row i answers query i; each row has one raw score per context node, in
/// the context's node order.
using ScoreMatrix = std::vector<std::vector<double>>;

/// Link-prediction backend g(u, r, v; H). Implementations must be
/// deterministic: the same context and query always give the same row.
class Scorer {
 public:
  virtual ~Scorer() = default;

  virtual void set_context(std::shared_ptr<const ContextGraph> context) = 0;
  virtual ScoreMatrix score_batch(std::span<const ScoreQuery> queries) = 0;

  std::vector<double> score_tails(EntityId head, RelationId rel);
  std::vector<double> score_heads(EntityId tail, RelationId rel);
};

// ---------------------------------------------------------------------------
// Softmax over candidate endpoints

struct RowNormalizer {
  double max = 0.0;
  double log_sum = 0.0;  // log(sum(exp(row - max)))
};

/// Throws Error(kScorerOutputInvalid) for an empty row or a non-finite entry.
RowNormalizer normalize_row(std::span<const double> row);

/// log p(target) under the softmax of `row`.
inline double log_probability(std::span<const double> row, const RowNormalizer& n,
                              std::size_t target) {
  return (row[target] - n.max) - n.log_sum;
}

/// exp(g_target) / sum_v exp(g_v), evaluated with max subtraction.
double edge_probability(std::span<const double> row, std::size_t target);
std::vector<double> softmax(std::span<const double> row);

// ---------------------------------------------------------------------------
// Anomaly scores

enum class Label : std::uint8_t { kBenign = 0, kMalicious = 1 };

/// Which rule produced a side's score.
namespace side_flag {
inline constexpr std::uint8_t kKnownEdge = 1;        // edge in context, score 0
inline constexpr std::uint8_t kUnknownRelation = 2;  // averaged over known relations
inline constexpr std::uint8_t kEndpointAbsent = 4;   // log|V_H| fallback
inline constexpr std::uint8_t kEmptyContext = 8;     // no score: context empty
inline constexpr std::uint8_t kWarmUp = 16;          // no score: warm-up window
}  // namespace side_flag

namespace refine_flag {
inline constexpr std::uint8_t kClamped = 1;   // lowered to the neighborhood max
inline constexpr std::uint8_t kIsolated = 2;  // no scored neighbor; set to 0
}  // namespace refine_flag

struct SideScore {
  std::optional<double> value;
  std::uint8_t flags = 0;
};

/// Single-edge evaluation against `context`, which must be the scorer's
/// current context:
///   edge in context               -> 0
///   relation not in context       -> mean score over the context relations
///   endpoint not in context       -> log |V_H|
///   otherwise                     -> -log min(p(v | u, r), p(u | v, r^-1))
/// Throws Error(kWarmUp) for an empty context.
SideScore anomaly_score(const Edge& edge, const ContextGraph& context, Scorer& scorer);

/// Mean of the two sides.
double combine(double s_short, double s_long);

struct ScoredEdge {
  WindowIndex window = 0;
  Edge edge{};
  std::optional<double> s_short;
  std::optional<double> s_long;
  std::optional<double> s_combined;
  std::optional<double> s_refined;
  std::uint8_t short_flags = 0;
  std::uint8_t long_flags = 0;
  std::uint8_t refine_flags = 0;
  Label label = Label::kBenign;
};

using RelationFilter = std::function<bool(RelationId)>;

RelationFilter make_relation_filter(const Vocabulary& vocabulary, ScoreablePredicate predicate);

struct ScoringOptions {
  /// Queries sent to the scorer per call.
  std::size_t max_batch = 512;
};

/// Scores every edge of `graph` passing `scoreable` against both contexts.
/// Queries are grouped by (anchor, relation, direction) and batched. An
/// empty short-term context leaves s_short unset and s_combined = s_long.
/// Output follows the graph's (src, rel, dst) edge order. Throws
/// Error(kWarmUp) when the long-term context is empty.
std::vector<ScoredEdge> score_window(const WindowGraph& graph, const ContextGraph& short_term,
                                     const ContextGraph& long_term, Scorer& scorer,
                                     const RelationFilter& scoreable,
                                     const ScoringOptions& options = {});

/// Overload taking shared snapshots, which scorers keep while scoring.
std::vector<ScoredEdge> score_window(const WindowGraph& graph,
                                     std::shared_ptr<const ContextGraph> short_term,
                                     std::shared_ptr<const ContextGraph> long_term,
                                     Scorer& scorer, const RelationFilter& scoreable,
                                     const ScoringOptions& options = {});

/// Null-scored entries for a window inside the warm-up region.
std::vector<ScoredEdge> warm_up_window(const WindowGraph& graph, const RelationFilter& scoreable);

/// Scores one side for a list of edges with batched queries. Exposed for
/// testing against the single-edge path.
std::vector<SideScore> score_side(std::span<const Edge> edges,
                                  std::shared_ptr<const ContextGraph> context, Scorer& scorer,
                                  const ScoringOptions& options = {});

}  // namespace lmd
