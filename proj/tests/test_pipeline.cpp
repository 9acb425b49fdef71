#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <map>
#include <random>
#include <sstream>

#include "lmd/artifacts.hpp"
#include "lmd/config.hpp"
#include "lmd/error.hpp"
#include "lmd/metrics.hpp"
#include "lmd/native_scorer.hpp"
#include "lmd/pipeline.hpp"
#include "lmd/refine.hpp"
#include "lmd/synth.hpp"
#include "support.hpp"

using namespace lmd;
using namespace lmd::testing;

namespace {

IngestConfig mini_ingest() {
  IngestConfig c;
  c.window_length = SynthConfig::mini().window_length;
  c.training_window_count = 6;
  c.scoreable = {false, true};
  return c;
}

const Dataset& mini_dataset() {
  static const Dataset d = [] {
    const SynthData data = generate_synthetic(SynthConfig::mini());
    return build_dataset(data.events, data.labels, mini_ingest());
  }();
  return d;
}

DetectionOptions mini_options(std::size_t k = 3) {
  DetectionOptions o;
  o.k = k;
  o.warmup_windows = 2;
  o.scoreable = {false, true};
  return o;
}

bool same(const std::optional<double>& a, const std::optional<double>& b) {
  if (a.has_value() != b.has_value()) return false;
  return !a || std::memcmp(&*a, &*b, sizeof(double)) == 0;
}

std::string scored_csv(const DetectionRun& run, const Vocabulary& v) {
  std::ostringstream out;
  write_scored_edges(out, run, v);
  return out.str();
}

}  // namespace

TEST(Detection, RepeatedRunsAreBitwiseIdentical) {
  NativeScorer a, b;
  const DetectionRun x = run_detection(mini_dataset(), a, mini_options());
  const DetectionRun y = run_detection(mini_dataset(), b, mini_options());
  ASSERT_EQ(x.edges.size(), y.edges.size());
  for (std::size_t i = 0; i < x.edges.size(); ++i) {
    ASSERT_EQ(x.edges[i].edge, y.edges[i].edge);
    ASSERT_TRUE(same(x.edges[i].s_short, y.edges[i].s_short));
    ASSERT_TRUE(same(x.edges[i].s_long, y.edges[i].s_long));
    ASSERT_TRUE(same(x.edges[i].s_refined, y.edges[i].s_refined));
  }
  EXPECT_EQ(scored_csv(x, *mini_dataset().vocabulary), scored_csv(y, *mini_dataset().vocabulary));
}

// Reference path: brute-force unions, unbatched single-edge scores,
// quadratic refinement, similarity checked against the selection.
TEST(Detection, MatchesReferencePipeline) {
  const Dataset& d = mini_dataset();
  HashScorer scorer;
  const DetectionOptions options = mini_options(4);
  const DetectionRun run = run_detection(d, scorer, options);
  const RelationFilter scoreable = make_relation_filter(*d.vocabulary, options.scoreable);

  std::map<std::pair<WindowIndex, Edge>, const ScoredEdge*> produced;
  for (const ScoredEdge& s : run.edges) produced[{s.window, s.edge}] = &s;

  RelationStats stats;
  std::size_t checked = 0;
  for (WindowIndex t = 0; t < d.windows.size(); ++t) {
    stats.observe(d.windows[t]);
    const WindowRecord& record = run.windows[t];
    std::vector<const WindowGraph*> past, chosen;
    for (WindowIndex w = 0; w < t; ++w) past.push_back(&d.windows[w]);
    for (WindowIndex w : record.decision.selected) chosen.push_back(&d.windows[w]);
    const BruteUnion long_union = brute_union(past);
    const bool warm = t < options.warmup_windows || long_union.edges.empty();
    ASSERT_EQ(record.warm_up, warm);

    if (!warm) {
      ASSERT_EQ(record.decision.selected.size(), std::min<std::size_t>(options.k, t));
      for (std::size_t i = 0; i < record.decision.selected.size(); ++i) {
        const double s = similarity(d.windows[t], d.windows[record.decision.selected[i]], stats);
        for (WindowIndex w = 0; w < t; ++w) {
          if (std::count(record.decision.selected.begin(), record.decision.selected.end(), w)) continue;
          ASSERT_GE(s, similarity(d.windows[t], d.windows[w], stats));
        }
      }
    }

    const BruteUnion short_union = brute_union(chosen);
    const auto short_ctx = context_of({short_union.edges.begin(), short_union.edges.end()});
    const auto long_ctx = context_of({long_union.edges.begin(), long_union.edges.end()});
    std::vector<Edge> edges;
    std::vector<double> combined;
    for (const Edge& e : d.windows[t].edges()) {
      if (!scoreable(e.rel)) continue;
      const ScoredEdge& s = *produced.at({t, e});
      ASSERT_EQ(s.label == Label::kMalicious, d.labels.is_malicious(t, e));
      if (warm) {
        ASSERT_FALSE(s.s_combined);
        continue;
      }
      scorer.set_context(short_ctx);
      const double ss = *anomaly_score(e, *short_ctx, scorer).value;
      scorer.set_context(long_ctx);
      const double sl = *anomaly_score(e, *long_ctx, scorer).value;
      ASSERT_EQ(*s.s_short, ss);
      ASSERT_EQ(*s.s_long, sl);
      ASSERT_EQ(*s.s_combined, combine(ss, sl));
      edges.push_back(e);
      combined.push_back(combine(ss, sl));
      ++checked;
    }
    // Quadratic neighborhood clamp.
    for (std::size_t i = 0; i < edges.size(); ++i) {
      double m = 0.0;
      bool any = false;
      for (std::size_t j = 0; j < edges.size(); ++j) {
        if (i == j) continue;
        if (edges[j].src == edges[i].src || edges[j].src == edges[i].dst ||
            edges[j].dst == edges[i].src || edges[j].dst == edges[i].dst) {
          m = any ? std::max(m, combined[j]) : combined[j];
          any = true;
        }
      }
      ASSERT_EQ(*produced.at({t, edges[i]})->s_refined, std::min(combined[i], any ? m : 0.0));
    }
  }
  EXPECT_GT(checked, 500u);
}

TEST(Detection, ZeroKUsesLongTermOnly) {
  NativeScorer scorer;
  const DetectionRun run = run_detection(mini_dataset(), scorer, mini_options(0));
  std::size_t scored = 0;
  for (const ScoredEdge& s : run.edges) {
    if (!s.s_combined) continue;
    ++scored;
    ASSERT_FALSE(s.s_short);
    ASSERT_EQ(s.short_flags, side_flag::kEmptyContext);
    ASSERT_EQ(*s.s_combined, *s.s_long);
  }
  EXPECT_GT(scored, 0u);
}

TEST(Detection, WarmUpWindowsAreNotScored) {
  NativeScorer scorer;
  DetectionOptions options = mini_options();
  options.warmup_windows = 10;
  const DetectionRun run = run_detection(mini_dataset(), scorer, options);
  for (const ScoredEdge& s : run.edges) {
    ASSERT_EQ(s.window < 10, !s.s_combined.has_value());
  }
  for (const WindowRecord& r : run.windows) {
    EXPECT_EQ(r.warm_up, r.window < 10);
    if (r.warm_up) {
      EXPECT_TRUE(r.decision.selected.empty());
    }
  }
}

TEST(Detection, DegenerateInputs) {
  NativeScorer scorer;
  const Dataset empty = build_dataset({}, {}, mini_ingest());
  EXPECT_TRUE(run_detection(empty, scorer, mini_options()).windows.empty());

  // A gap of empty windows between two bursts of traffic.
  RawEvent e;
  e.kind = EventKind::kFlow;
  e.src_host = "A";
  e.dst_host = "B";
  e.protocol = "6";
  e.dst_port = "22";
  std::vector<RawEvent> events = {e};
  e.timestamp = 5 * 360;
  e.dst_host = "C";
  events.push_back(e);
  const Dataset gap = build_dataset(events, {}, mini_ingest());
  DetectionOptions options = mini_options();
  options.warmup_windows = 1;
  const DetectionRun run = run_detection(gap, scorer, options);
  ASSERT_EQ(run.windows.size(), 6u);
  ASSERT_EQ(run.edges.size(), 2u);
  EXPECT_FALSE(run.edges[0].s_combined);
  ASSERT_TRUE(run.edges[1].s_combined);
  EXPECT_EQ(run.edges[1].window, 5u);
  // Endpoint C is new, so both sides use the log |V| fallback; the edge
  // has no neighbor in its window and is refined to 0.
  EXPECT_EQ(run.edges[1].long_flags, side_flag::kEndpointAbsent);
  EXPECT_EQ(*run.edges[1].s_refined, 0.0);
}

TEST(Detection, ScorerErrorsNameTheWindow) {
  class Failing : public Scorer {
   public:
    void set_context(std::shared_ptr<const ContextGraph>) override {}
    ScoreMatrix score_batch(std::span<const ScoreQuery>) override {
      throw Error(ErrorCode::kScorerUnavailable, "gone");
    }
  } failing;
  try {
    run_detection(mini_dataset(), failing, mini_options());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kScorerUnavailable);
    ASSERT_TRUE(e.window());
    EXPECT_GE(*e.window(), 2u);
  }
}

// ---------------------------------------------------------------------------
// Configuration

TEST(Config, Presets) {
  const RunConfig lanl = RunConfig::from_preset("lanl");
  EXPECT_EQ(lanl.ingest.window_length, 3600);
  EXPECT_EQ(lanl.k, 10u);
  EXPECT_EQ(lanl.ingest.training_window_count, 41u);
  EXPECT_TRUE(lanl.ingest.scoreable.auth);
  EXPECT_FALSE(lanl.ingest.scoreable.flow);
  EXPECT_EQ(lanl.effective_warmup(), 41u);
  const RunConfig optc = RunConfig::from_preset("optc");
  EXPECT_EQ(optc.ingest.window_length, 360);
  EXPECT_EQ(optc.k, 100u);
  EXPECT_TRUE(optc.ingest.scoreable.flow);
  EXPECT_THROW(RunConfig::from_preset("other"), Error);
}

TEST(Config, JsonOverridesPresetAndEchoesBack) {
  RunConfig c;
  apply_json(c, nlohmann::json::parse(R"({"k": 4, "preset": "lanl", "warmup_windows": 2})"));
  EXPECT_EQ(c.k, 4u);
  EXPECT_EQ(c.ingest.window_length, 3600);
  EXPECT_EQ(c.effective_warmup(), 2u);
  RunConfig back;
  apply_json(back, nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(to_json(back).dump(), to_json(c).dump());
}

TEST(Config, RejectsBadValues) {
  RunConfig c;
  EXPECT_THROW(apply_json(c, nlohmann::json::parse(R"({"nope": 1})")), Error);
  EXPECT_THROW(apply_json(c, nlohmann::json::parse(R"({"k": -1})")), Error);
  EXPECT_THROW(apply_json(c, nlohmann::json::parse(R"({"k": "ten"})")), Error);
  EXPECT_THROW(apply_json(c, nlohmann::json::parse("[]")), Error);
  RunConfig bad;
  bad.budgets = {0};
  EXPECT_THROW(bad.validate(), Error);
  bad = RunConfig{};
  bad.scorer = "magic";
  EXPECT_THROW(bad.validate(), Error);
  EXPECT_THROW(load_config("/nonexistent/config.json"), Error);
}

// ---------------------------------------------------------------------------
// Artifacts

TEST(Artifacts, FlagDescriptions) {
  ScoredEdge e;
  EXPECT_EQ(describe_flags(e), "");
  e.short_flags = side_flag::kKnownEdge;
  e.long_flags = side_flag::kEndpointAbsent | side_flag::kUnknownRelation;
  e.refine_flags = refine_flag::kClamped;
  EXPECT_EQ(describe_flags(e), "short:known|long:unknown-relation|long:endpoint-absent|clamped");
  ScoredEdge w;
  w.short_flags = w.long_flags = side_flag::kWarmUp;
  EXPECT_EQ(describe_flags(w), "warm-up");
}

TEST(Artifacts, ScoredEdgesRoundTripAndEvaluateIdentically) {
  NativeScorer scorer;
  const DetectionRun run = run_detection(mini_dataset(), scorer, mini_options());
  std::istringstream in(scored_csv(run, *mini_dataset().vocabulary));
  const auto rows = read_scored_edges(in);
  ASSERT_EQ(rows.size(), run.edges.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ASSERT_EQ(rows[i].window, run.edges[i].window);
    ASSERT_TRUE(same(rows[i].s_short, run.edges[i].s_short));
    ASSERT_TRUE(same(rows[i].s_long, run.edges[i].s_long));
    ASSERT_TRUE(same(rows[i].s_refined, run.edges[i].s_refined));
    ASSERT_EQ(rows[i].label, run.edges[i].label);
  }
  EXPECT_EQ(window_count(rows), mini_dataset().windows.size());

  const std::size_t budgets[] = {1, 3};
  for (ScoreKind kind : {ScoreKind::kRefined, ScoreKind::kCombined}) {
    const auto memory = ranked_edges(run.edges, kind);
    const auto file = ranked_rows(rows, kind);
    ASSERT_EQ(memory.size(), file.size());
    for (bool dedup : {false, true}) {
      const EvaluationReport a = evaluate(memory, budgets, kind, dedup);
      const EvaluationReport b = evaluate(file, budgets, kind, dedup);
      EXPECT_EQ(a.auc, b.auc);
      EXPECT_EQ(a.ap, b.ap);
      EXPECT_EQ(a.recall, b.recall);
      EXPECT_EQ(a.positives, b.positives);
    }
  }
}

TEST(Artifacts, RelabelReproducesIngestLabels) {
  NativeScorer scorer;
  const DetectionRun run = run_detection(mini_dataset(), scorer, mini_options());
  std::istringstream in(scored_csv(run, *mini_dataset().vocabulary));
  auto rows = read_scored_edges(in);
  std::vector<Label> before;
  for (auto& r : rows) {
    before.push_back(r.label);
    r.label = Label::kBenign;
  }
  relabel(rows, generate_synthetic(SynthConfig::mini()).labels, mini_ingest());
  for (std::size_t i = 0; i < rows.size(); ++i) ASSERT_EQ(rows[i].label, before[i]);
}

TEST(Artifacts, ReaderRejectsBadInput) {
  std::istringstream wrong_header("window,src\n");
  EXPECT_THROW(read_scored_edges(wrong_header), Error);
  std::istringstream bad_row(std::string(kScoredEdgesHeader) + "\nx,a,b,c,,,,,benign,,0,0\n");
  EXPECT_THROW(read_scored_edges(bad_row), Error);
}

TEST(Artifacts, ManifestIsDeterministic) {
  RunConfig config;
  config.ingest = mini_ingest();
  config.k = 3;
  NativeScorer a, b;
  const auto x = make_manifest(config, mini_dataset(), run_detection(mini_dataset(), a, mini_options()),
                               "native-common-neighbors");
  const auto y = make_manifest(config, mini_dataset(), run_detection(mini_dataset(), b, mini_options()),
                               "native-common-neighbors");
  EXPECT_EQ(x.dump(2), y.dump(2));
  EXPECT_TRUE(x.contains("config"));
}

TEST(Artifacts, TimingSummaryUsesScoredWindowsOnly) {
  std::istringstream in(std::string(kTimingsHeader) +
                        "\n0,1,9,9,9\n1,0,1,2,3\n2,0,3,2,1\n");
  const auto rows = read_timings(in);
  ASSERT_EQ(rows.size(), 3u);
  std::ostringstream out;
  write_timing_summary(out, rows);
  const std::string s = out.str();
  EXPECT_NE(s.find("context,2,1,2"), std::string::npos) << s;
  EXPECT_NE(s.find("scoring,2,0,2"), std::string::npos) << s;
}
