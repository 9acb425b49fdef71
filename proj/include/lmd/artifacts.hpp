#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmd/config.hpp"
#include "lmd/metrics.hpp"
#include "lmd/pipeline.hpp"

namespace lmd {

inline constexpr std::string_view kScoredEdgesHeader =
    "window,src,rel,dst,s_short,s_long,s_combined,s_refined,label,flags,short_edges,long_edges";
inline constexpr std::string_view kRetrievalAuditHeader =
    "window,warm_up,selected,selected_similarities,candidate_similarities,short_nodes,"
    "short_edges,long_nodes,long_edges";
inline constexpr std::string_view kTimingsHeader =
    "window,warm_up,context_seconds,scoring_seconds,refine_seconds";
inline constexpr std::string_view kPercentilesHeader = "window,p90,p99,p999";
inline constexpr std::string_view kMaliciousScoresHeader = "window,src,rel,dst,score";
inline constexpr std::string_view kTimingSummaryHeader = "stage,mean_seconds,std_seconds,windows";

/// '|'-joined rule tags, e.g. "short:known|long:endpoint-absent|clamped".
std::string describe_flags(const ScoredEdge& edge);

void write_scored_edges(std::ostream& out, const DetectionRun& run, const Vocabulary& vocabulary);
void write_retrieval_audit(std::ostream& out, const DetectionRun& run);
void write_timings(std::ostream& out, const DetectionRun& run);

/// Deterministic run summary: configuration echo, ingest and label counts,
/// run counts, and any non-standard semantics in effect. Timings are kept
/// out so the manifest is reproducible byte for byte.
nlohmann::ordered_json make_manifest(const RunConfig& config, const Dataset& dataset,
                                     const DetectionRun& run, const std::string& scorer_model);

/// A scored-edges row read back from disk.
struct ScoredRow {
  WindowIndex window = 0;
  std::string src, rel, dst;
  std::optional<double> s_short, s_long, s_combined, s_refined;
  Label label = Label::kBenign;
  std::string flags;
  std::size_t short_edges = 0, long_edges = 0;
};

/// Throws Error(kInputError) on a wrong header or malformed row.
std::vector<ScoredRow> read_scored_edges(std::istream& in);

/// Replaces every row's label: malicious iff a record with the same source
/// and destination host falls into the row's window.
void relabel(std::span<ScoredRow> rows, std::span<const LabelRecord> records,
             const IngestConfig& config);

/// Rows carrying the requested score, in file order (which is canonical).
/// Entities and relations get identities local to this call.
std::vector<RankedEdge> ranked_rows(std::span<const ScoredRow> rows, ScoreKind kind);

std::size_t window_count(std::span<const ScoredRow> rows);

void write_percentiles(std::ostream& out, std::span<const PercentileRow> rows);
void write_malicious_scores(std::ostream& out, std::span<const ScoredRow> rows, ScoreKind kind);

struct TimingRow {
  WindowIndex window = 0;
  bool warm_up = false;
  double context_seconds = 0.0, scoring_seconds = 0.0, refine_seconds = 0.0;
};

std::vector<TimingRow> read_timings(std::istream& in);
/// Mean and standard deviation per stage over the non-warm-up windows.
void write_timing_summary(std::ostream& out, std::span<const TimingRow> rows);

void write_metrics_csv(std::ostream& out, std::span<const EvaluationReport> reports);
nlohmann::ordered_json metrics_json(std::span<const EvaluationReport> reports);
/// Human-readable table: one row per dedup mode.
std::string metrics_table(std::span<const EvaluationReport> reports);

}  // namespace lmd
