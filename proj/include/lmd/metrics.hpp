#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lmd/graph.hpp"
#include "lmd/scoring.hpp"

namespace lmd {

/// One evaluated edge. Sequences of RankedEdge are kept in canonical order
/// (window, src, rel, dst); that order is the tie-break for equal scores.
struct RankedEdge {
  WindowIndex window = 0;
  Edge edge{};
  double score = 0.0;
  Label label = Label::kBenign;
};

enum class ScoreKind : std::uint8_t { kRefined, kCombined };

std::string_view to_string(ScoreKind kind);

/// Scored (post-warm-up) entries of a run as RankedEdge, sorted canonically.
/// Entries lacking the requested score are skipped.
std::vector<RankedEdge> ranked_edges(std::span<const ScoredEdge> scored, ScoreKind kind);

/// Mann-Whitney statistic with average ranks for ties.
/// Throws Error(kDegenerateLabels) unless both classes are present.
double auc(std::span<const double> scores, std::span<const Label> labels);

/// Step-wise average precision over the ranking by score descending, equal
/// scores ordered by input position. Throws Error(kDegenerateLabels)
/// without positives.
double average_precision(std::span<const double> scores, std::span<const Label> labels);

/// Fraction of malicious edges among the union of every window's top-B
/// edges (score descending, ties by input position). Throws
/// Error(kDegenerateLabels) without malicious edges and
/// Error(kInvalidArgument) for B = 0.
double recall_at_budget(std::span<const RankedEdge> edges, std::size_t budget);

/// Keeps only the highest-scoring occurrence of each malicious
/// (src, rel, dst); ties keep the earliest window. Benign entries and the
/// relative order of survivors are unchanged.
std::vector<RankedEdge> deduplicate_malicious(std::span<const RankedEdge> edges);

/// Nearest-rank percentile: the ceil(n * per_mille / 1000)-th smallest
/// value (1-based, at least the first). Throws on an empty input.
double nearest_rank(std::span<const double> sorted, std::uint32_t per_mille);

inline constexpr std::uint32_t kPercentileLevels[] = {900, 990, 999};

struct PercentileRow {
  WindowIndex window = 0;
  std::size_t count = 0;
  std::optional<double> p90, p99, p999;
};

/// One row per window in [0, window_count), empty windows included.
std::vector<PercentileRow> percentile_series(std::span<const RankedEdge> edges,
                                             std::size_t window_count);

struct EvaluationReport {
  ScoreKind score_kind = ScoreKind::kRefined;
  bool deduplicated = false;
  double auc = 0.0;
  double ap = 0.0;
  std::map<std::size_t, double> recall;  // budget -> Rec@B
  std::size_t positives = 0;
  std::size_t negatives = 0;
  std::size_t windows = 0;  // windows contributing at least one edge
};

EvaluationReport evaluate(std::span<const RankedEdge> edges, std::span<const std::size_t> budgets,
                          ScoreKind kind, bool deduplicate);

struct MeanStd {
  double mean = 0.0;
  double stddev = 0.0;  // population
  std::size_t count = 0;
};

MeanStd mean_std(std::span<const double> values);

}  // namespace lmd
