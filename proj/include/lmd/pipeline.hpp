#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lmd/graph.hpp"
#include "lmd/ingest.hpp"
#include "lmd/retrieval.hpp"
#include "lmd/scoring.hpp"

namespace lmd {

enum class InputFormat : std::uint8_t { kLanl, kGeneric };

struct DataSources {
  InputFormat format = InputFormat::kGeneric;
  std::string auth;    // LANL auth file
  std::string flows;   // LANL flows file (optional)
  std::string events;  // generic event CSV
  std::string labels;  // label records (optional)
};

struct Dataset {
  std::unique_ptr<Vocabulary> vocabulary = std::make_unique<Vocabulary>();
  std::vector<WindowGraph> windows;
  LabelAssignment labels;
  IngestReport report;        // event files
  IngestReport label_report;  // label file
  FlowTypeSet retained_flows;
};

/// Builds windows and labels from in-memory events.
Dataset build_dataset(std::span<const RawEvent> events, std::span<const LabelRecord> labels,
                      const IngestConfig& config);

/// Reads the configured files. Throws Error(kInputError) when a file cannot
/// be opened.
Dataset load_dataset(const DataSources& sources, const IngestConfig& config);

struct DetectionOptions {
  std::size_t k = 10;
  /// Windows before this ordinal are not scored (null scores).
  std::uint32_t warmup_windows = 1;
  bool refine = true;
  ScoreablePredicate scoreable;
  ScoringOptions scoring;
};

/// Per-window audit record.
struct WindowRecord {
  WindowIndex window = 0;
  bool warm_up = false;
  RetrievalDecision decision;
  std::size_t short_nodes = 0, short_edges = 0;
  std::size_t long_nodes = 0, long_edges = 0;
  std::size_t scored = 0;
  double context_seconds = 0.0;
  double scoring_seconds = 0.0;
  double refine_seconds = 0.0;
};

struct DetectionRun {
  /// Scoreable edges of every window, in (window, src, rel, dst) order.
  std::vector<ScoredEdge> edges;
  std::vector<WindowRecord> windows;
};

using ProgressCallback = std::function<void(const WindowRecord&)>;

/// Processes windows in ordinal order: update relation statistics, select
/// the K most similar past windows, assemble both contexts, score, refine,
/// and attach labels. Errors carry the failing window.
DetectionRun run_detection(const Dataset& dataset, Scorer& scorer, const DetectionOptions& options,
                           const ProgressCallback& progress = {});

}  // namespace lmd
