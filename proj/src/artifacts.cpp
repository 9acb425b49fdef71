#include "lmd/artifacts.hpp"

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "lmd/error.hpp"
#include "lmd/refine.hpp"
#include "lmd/text.hpp"

namespace lmd {

namespace {

using text::csv_field;
using text::format_double;

std::string optional_double(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

void side_tags(std::vector<std::string>& tags, const char* side, std::uint8_t flags) {
  const std::string prefix = std::string(side) + ":";
  if (flags & side_flag::kKnownEdge) tags.push_back(prefix + "known");
  if (flags & side_flag::kUnknownRelation) tags.push_back(prefix + "unknown-relation");
  if (flags & side_flag::kEndpointAbsent) tags.push_back(prefix + "endpoint-absent");
  if (flags & side_flag::kEmptyContext) tags.push_back(prefix + "empty-context");
}

std::string join_doubles(std::span<const double> values) {
  std::vector<std::string> parts;
  parts.reserve(values.size());
  for (double v : values) parts.push_back(format_double(v));
  return text::join(parts, ";");
}

[[noreturn]] void bad_row(const std::string& what, std::size_t line) {
  throw Error(ErrorCode::kInputError, what + " at line " + std::to_string(line));
}

std::optional<double> read_optional(const std::string& s, std::size_t line) {
  if (s.empty()) return std::nullopt;
  auto v = text::parse_double(s);
  if (!v) bad_row("bad number \"" + s + "\"", line);
  return v;
}

std::size_t read_count(const std::string& s, std::size_t line) {
  auto v = text::parse_int(s);
  if (!v || *v < 0) bad_row("bad count \"" + s + "\"", line);
  return static_cast<std::size_t>(*v);
}

std::string label_name(Label label) { return label == Label::kMalicious ? "malicious" : "benign"; }

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string describe_flags(const ScoredEdge& e) {
  std::vector<std::string> tags;
  if ((e.short_flags & side_flag::kWarmUp) || (e.long_flags & side_flag::kWarmUp)) {
    tags.push_back("warm-up");
  }
  side_tags(tags, "short", e.short_flags);
  side_tags(tags, "long", e.long_flags);
  if (e.refine_flags & refine_flag::kClamped) tags.push_back("clamped");
  if (e.refine_flags & refine_flag::kIsolated) tags.push_back("isolated");
  return text::join(tags, "|");
}

void write_scored_edges(std::ostream& out, const DetectionRun& run, const Vocabulary& vocabulary) {
  std::map<WindowIndex, const WindowRecord*> records;
  for (const WindowRecord& r : run.windows) records[r.window] = &r;
  out << kScoredEdgesHeader << '\n';
  for (const ScoredEdge& e : run.edges) {
    const WindowRecord* r = records.at(e.window);
    out << e.window << ',' << csv_field(vocabulary.entity(e.edge.src).label) << ','
        << csv_field(vocabulary.relation(e.edge.rel).descriptor.to_string()) << ','
        << csv_field(vocabulary.entity(e.edge.dst).label) << ',' << optional_double(e.s_short)
        << ',' << optional_double(e.s_long) << ',' << optional_double(e.s_combined) << ','
        << optional_double(e.s_refined) << ',' << label_name(e.label) << ','
        << describe_flags(e) << ',' << r->short_edges << ',' << r->long_edges << '\n';
  }
}

void write_retrieval_audit(std::ostream& out, const DetectionRun& run) {
  out << kRetrievalAuditHeader << '\n';
  for (const WindowRecord& r : run.windows) {
    std::vector<std::string> selected;
    for (WindowIndex w : r.decision.selected) selected.push_back(std::to_string(w));
    out << r.window << ',' << (r.warm_up ? 1 : 0) << ',' << text::join(selected, ";") << ','
        << join_doubles(r.decision.selected_similarity) << ','
        << join_doubles(r.decision.candidate_similarity) << ',' << r.short_nodes << ','
        << r.short_edges << ',' << r.long_nodes << ',' << r.long_edges << '\n';
  }
}

void write_timings(std::ostream& out, const DetectionRun& run) {
  out << kTimingsHeader << '\n';
  for (const WindowRecord& r : run.windows) {
    out << r.window << ',' << (r.warm_up ? 1 : 0) << ',' << format_double(r.context_seconds) << ','
        << format_double(r.scoring_seconds) << ',' << format_double(r.refine_seconds) << '\n';
  }
}

nlohmann::ordered_json make_manifest(const RunConfig& config, const Dataset& dataset,
                                     const DetectionRun& run, const std::string& scorer_model) {
  nlohmann::ordered_json m;
  m["tool"] = "lmdetect";
  m["version"] = "1.0.0";
  m["config"] = to_json(config);

  nlohmann::ordered_json extensions = nlohmann::ordered_json::array();
  if (config.k == 0) {
    extensions.push_back(
        "k=0: short-term context is always empty; s_short is left blank and "
        "s_combined equals s_long");
  }
  m["extensions"] = extensions;

  const IngestReport& r = dataset.report;
  m["ingest"] = {{"lines", r.lines},       {"events", r.events},
                 {"malformed", r.malformed}, {"filtered", r.filtered},
                 {"skipped", r.skipped},   {"failed_auth", r.failed_auth}};
  std::vector<std::string> flows;
  for (const auto& [protocol, port] : dataset.retained_flows) flows.push_back(protocol + ":" + port);
  m["retained_flow_types"] = flows;
  m["labels"] = {{"records", dataset.label_report.events},
                 {"malformed", dataset.label_report.malformed},
                 {"matched", dataset.labels.matched_records},
                 {"unmatched", dataset.labels.unmatched.size()},
                 {"malicious_edges", dataset.labels.malicious.size()}};

  std::size_t warm = 0, scored = 0, malicious = 0;
  for (const WindowRecord& w : run.windows) warm += w.warm_up ? 1 : 0;
  for (const ScoredEdge& e : run.edges) {
    if (!e.s_combined) continue;
    ++scored;
    if (e.label == Label::kMalicious) ++malicious;
  }
  m["run"] = {{"windows", run.windows.size()},
              {"warm_up_windows", warm},
              {"scoreable_edges", run.edges.size()},
              {"scored_edges", scored},
              {"scored_malicious_edges", malicious},
              {"entities", dataset.vocabulary->entity_count()},
              {"relations", dataset.vocabulary->relation_count()}};
  m["scorer"] = {{"kind", config.scorer}, {"model", scorer_model}};
  return m;
}

std::vector<ScoredRow> read_scored_edges(std::istream& in) {
  std::vector<ScoredRow> rows;
  std::string line;
  std::size_t number = 0;
  if (!std::getline(in, line) || text::chomp(line) != kScoredEdgesHeader) {
    throw Error(ErrorCode::kInputError, "scored-edges file lacks the expected header");
  }
  ++number;
  while (std::getline(in, line)) {
    ++number;
    const auto view = text::chomp(line);
    if (view.empty()) continue;
    auto f = text::split_csv(view);
    if (!f || f->size() != 12) bad_row("malformed scored-edges row", number);
    ScoredRow r;
    const auto window = text::parse_int((*f)[0]);
    if (!window || *window < 0 || *window > UINT32_MAX) bad_row("bad window", number);
    r.window = static_cast<WindowIndex>(*window);
    r.src = (*f)[1];
    r.rel = (*f)[2];
    r.dst = (*f)[3];
    r.s_short = read_optional((*f)[4], number);
    r.s_long = read_optional((*f)[5], number);
    r.s_combined = read_optional((*f)[6], number);
    r.s_refined = read_optional((*f)[7], number);
    if ((*f)[8] == "malicious") {
      r.label = Label::kMalicious;
    } else if ((*f)[8] != "benign") {
      bad_row("bad label \"" + (*f)[8] + "\"", number);
    }
    r.flags = (*f)[9];
    r.short_edges = read_count((*f)[10], number);
    r.long_edges = read_count((*f)[11], number);
    rows.push_back(std::move(r));
  }
  return rows;
}

void relabel(std::span<ScoredRow> rows, std::span<const LabelRecord> records,
             const IngestConfig& config) {
  std::set<std::tuple<WindowIndex, std::string, std::string>> keys;
  for (const LabelRecord& r : records) {
    const std::int64_t shifted = r.timestamp - config.time_origin;
    if (shifted < 0) continue;
    keys.emplace(assign_window(shifted, config.window_length), r.src_host, r.dst_host);
  }
  for (ScoredRow& row : rows) {
    row.label = keys.contains({row.window, row.src, row.dst}) ? Label::kMalicious : Label::kBenign;
  }
}

std::vector<RankedEdge> ranked_rows(std::span<const ScoredRow> rows, ScoreKind kind) {
  std::unordered_map<std::string, std::uint32_t> entities, relations;
  const auto id = [](auto& table, const std::string& s) {
    return table.try_emplace(s, static_cast<std::uint32_t>(table.size())).first->second;
  };
  std::vector<RankedEdge> out;
  for (const ScoredRow& r : rows) {
    const auto& value = kind == ScoreKind::kRefined ? r.s_refined : r.s_combined;
    if (!value) continue;
    out.push_back({r.window,
                   Edge{EntityId{id(entities, r.src)}, RelationId{id(relations, r.rel)},
                        EntityId{id(entities, r.dst)}},
                   *value, r.label});
  }
  return out;
}

std::size_t window_count(std::span<const ScoredRow> rows) {
  std::size_t n = 0;
  for (const ScoredRow& r : rows) n = std::max<std::size_t>(n, r.window + 1);
  return n;
}

void write_percentiles(std::ostream& out, std::span<const PercentileRow> rows) {
  out << kPercentilesHeader << '\n';
  for (const PercentileRow& r : rows) {
    out << r.window << ',' << optional_double(r.p90) << ',' << optional_double(r.p99) << ','
        << optional_double(r.p999) << '\n';
  }
}

void write_malicious_scores(std::ostream& out, std::span<const ScoredRow> rows, ScoreKind kind) {
  out << kMaliciousScoresHeader << '\n';
  for (const ScoredRow& r : rows) {
    const auto& value = kind == ScoreKind::kRefined ? r.s_refined : r.s_combined;
    if (r.label != Label::kMalicious || !value) continue;
    out << r.window << ',' << csv_field(r.src) << ',' << csv_field(r.rel) << ','
        << csv_field(r.dst) << ',' << format_double(*value) << '\n';
  }
}

std::vector<TimingRow> read_timings(std::istream& in) {
  std::vector<TimingRow> rows;
  std::string line;
  std::size_t number = 1;
  if (!std::getline(in, line) || text::chomp(line) != kTimingsHeader) {
    throw Error(ErrorCode::kInputError, "timings file lacks the expected header");
  }
  while (std::getline(in, line)) {
    ++number;
    const auto view = text::chomp(line);
    if (view.empty()) continue;
    auto f = text::split_csv(view);
    if (!f || f->size() != 5) bad_row("malformed timings row", number);
    TimingRow r;
    r.window = static_cast<WindowIndex>(read_count((*f)[0], number));
    r.warm_up = (*f)[1] == "1";
    const auto c = read_optional((*f)[2], number);
    const auto s = read_optional((*f)[3], number);
    const auto x = read_optional((*f)[4], number);
    if (!c || !s || !x) bad_row("missing timing", number);
    r.context_seconds = *c;
    r.scoring_seconds = *s;
    r.refine_seconds = *x;
    rows.push_back(r);
  }
  return rows;
}

void write_timing_summary(std::ostream& out, std::span<const TimingRow> rows) {
  std::vector<double> context, scoring, refine, total;
  for (const TimingRow& r : rows) {
    if (r.warm_up) continue;
    context.push_back(r.context_seconds);
    scoring.push_back(r.scoring_seconds);
    refine.push_back(r.refine_seconds);
    total.push_back(r.context_seconds + r.scoring_seconds + r.refine_seconds);
  }
  out << kTimingSummaryHeader << '\n';
  const auto row = [&](const char* stage, const std::vector<double>& v) {
    const MeanStd s = mean_std(v);
    out << stage << ',' << format_double(s.mean) << ',' << format_double(s.stddev) << ','
        << s.count << '\n';
  };
  row("context", context);
  row("scoring", scoring);
  row("refine", refine);
  row("total", total);
}

void write_metrics_csv(std::ostream& out, std::span<const EvaluationReport> reports) {
  out << "duplicates,score,auc,ap";
  if (!reports.empty()) {
    for (const auto& [b, _] : reports.front().recall) out << ",rec@" << b;
  }
  out << ",positives,negatives,windows\n";
  for (const EvaluationReport& r : reports) {
    out << (r.deduplicated ? "without" : "with") << ',' << to_string(r.score_kind) << ','
        << format_double(r.auc) << ',' << format_double(r.ap);
    for (const auto& [b, v] : r.recall) out << ',' << format_double(v);
    out << ',' << r.positives << ',' << r.negatives << ',' << r.windows << '\n';
  }
}

nlohmann::ordered_json metrics_json(std::span<const EvaluationReport> reports) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const EvaluationReport& r : reports) {
    nlohmann::ordered_json j;
    j["duplicates"] = r.deduplicated ? "without" : "with";
    j["score"] = to_string(r.score_kind);
    j["auc"] = r.auc;
    j["ap"] = r.ap;
    nlohmann::ordered_json recall;
    for (const auto& [b, v] : r.recall) recall[std::to_string(b)] = v;
    j["recall_at"] = recall;
    j["positives"] = r.positives;
    j["negatives"] = r.negatives;
    j["windows"] = r.windows;
    out.push_back(std::move(j));
  }
  return out;
}

std::string metrics_table(std::span<const EvaluationReport> reports) {
  std::ostringstream out;
  out << "Duplicates  Score      AUC     AP";
  if (!reports.empty()) {
    for (const auto& [b, _] : reports.front().recall) {
      std::string h = "Rec@" + std::to_string(b);
      out << std::string(h.size() < 8 ? 8 - h.size() : 1, ' ') << h;
    }
  }
  out << '\n';
  for (const EvaluationReport& r : reports) {
    std::string mode = r.deduplicated ? "without" : "with";
    std::string kind(to_string(r.score_kind));
    out << mode << std::string(12 - mode.size(), ' ') << kind << std::string(9 - kind.size(), ' ')
        << fixed(r.auc, 4) << ' ' << fixed(r.ap, 4);
    for (const auto& [b, v] : r.recall) out << "  " << fixed(v, 4);
    out << '\n';
  }
  return out.str();
}

}  // namespace lmd
