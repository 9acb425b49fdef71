#include "lmd/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>

#include "lmd/error.hpp"
#include "lmd/refine.hpp"

namespace lmd {

namespace {

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInputError, "cannot open " + path);
  return in;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

Dataset build_dataset(std::span<const RawEvent> events, std::span<const LabelRecord> labels,
                      const IngestConfig& config) {
  config.validate();
  Dataset d;
  FlowTypeCounter counter(config);
  for (const RawEvent& e : events) counter.add(e);
  d.retained_flows = counter.retained();

  WindowGraphBuilder builder(*d.vocabulary, config, d.retained_flows);
  for (const RawEvent& e : events) builder.add(e, d.report);
  d.windows = builder.finish();
  d.labels = attach_labels(d.windows, labels, config, *d.vocabulary);
  return d;
}

Dataset load_dataset(const DataSources& sources, const IngestConfig& config) {
  IngestReport report;
  IngestReport label_report;
  std::vector<RawEvent> events;
  const EventSink sink = [&](RawEvent&& e) { events.push_back(std::move(e)); };
  if (sources.format == InputFormat::kLanl) {
    if (sources.auth.empty() && sources.flows.empty()) {
      throw Error(ErrorCode::kInputError, "LANL input needs an auth or flows file");
    }
    if (!sources.auth.empty()) {
      auto in = open_input(sources.auth);
      parse_lanl_auth(in, sink, report);
    }
    if (!sources.flows.empty()) {
      auto in = open_input(sources.flows);
      parse_lanl_flows(in, sink, report);
    }
  } else {
    if (sources.events.empty()) throw Error(ErrorCode::kInputError, "no event file given");
    auto in = open_input(sources.events);
    parse_generic_events(in, sink, report);
  }
  std::vector<LabelRecord> labels;
  if (!sources.labels.empty()) {
    auto in = open_input(sources.labels);
    labels = parse_label_records(in, label_report);
  }
  // Window assignment is by timestamp only, so merging sources needs no
  // reordering; a stable sort keeps the build independent of file order.
  std::stable_sort(events.begin(), events.end(),
                   [](const RawEvent& a, const RawEvent& b) { return a.timestamp < b.timestamp; });

  Dataset d = build_dataset(events, labels, config);
  report.skipped += d.report.skipped;
  for (auto& diag : d.report.diagnostics) report.add(std::move(diag));
  d.report = std::move(report);
  d.label_report = std::move(label_report);
  return d;
}

DetectionRun run_detection(const Dataset& dataset, Scorer& scorer, const DetectionOptions& options,
                           const ProgressCallback& progress) {
  const RelationFilter scoreable = make_relation_filter(*dataset.vocabulary, options.scoreable);
  const std::span<const WindowGraph> store(dataset.windows);
  RelationStats stats;
  ContextAssembler assembler(store);
  DetectionRun run;

  for (WindowIndex t = 0; t < store.size(); ++t) {
    const WindowGraph& graph = store[t];
    WindowRecord record;
    record.window = t;
    std::vector<ScoredEdge> scored;
    try {
      auto start = std::chrono::steady_clock::now();
      stats.observe(graph);
      ContextPair contexts;
      if (t >= options.warmup_windows) {
        record.decision = select_context(graph, store.first(t), options.k, stats);
        contexts = assembler.assemble(t, record.decision);
      }
      record.warm_up = !contexts.long_term || contexts.long_term->empty();
      if (contexts.short_term) {
        record.short_nodes = contexts.short_term->node_count();
        record.short_edges = contexts.short_term->edge_count();
      }
      if (contexts.long_term) {
        record.long_nodes = contexts.long_term->node_count();
        record.long_edges = contexts.long_term->edge_count();
      }
      record.context_seconds = seconds_since(start);

      start = std::chrono::steady_clock::now();
      if (record.warm_up) {
        scored = warm_up_window(graph, scoreable);
      } else {
        scored = score_window(graph, contexts.short_term, contexts.long_term, scorer, scoreable,
                              options.scoring);
      }
      record.scoring_seconds = seconds_since(start);

      start = std::chrono::steady_clock::now();
      if (options.refine) refine_window(scored);
      record.refine_seconds = seconds_since(start);
    } catch (const Error& e) {
      if (e.window()) throw;
      throw e.with_window(t);
    }

    for (ScoredEdge& s : scored) {
      if (dataset.labels.is_malicious(t, s.edge)) s.label = Label::kMalicious;
      if (s.s_combined) ++record.scored;
    }
    run.edges.insert(run.edges.end(), scored.begin(), scored.end());
    if (progress) progress(record);
    run.windows.push_back(std::move(record));
  }
  return run;
}

}  // namespace lmd
