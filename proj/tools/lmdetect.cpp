// Command-line front end: detect / eval / report / synth / serve-native.

#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lmd/artifacts.hpp"
#include "lmd/config.hpp"
#include "lmd/error.hpp"
#include "lmd/gfm_adapter.hpp"
#include "lmd/metrics.hpp"
#include "lmd/native_scorer.hpp"
#include "lmd/pipeline.hpp"
#include "lmd/synth.hpp"
#include "lmd/text.hpp"

namespace fs = std::filesystem;
using namespace lmd;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitScorer = 2;
constexpr int kExitInternal = 3;

constexpr const char* kNativeModel = "native-common-neighbors";

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kScorerOutputInvalid:
    case ErrorCode::kScorerUnavailable:
      return kExitScorer;
    case ErrorCode::kInvariantViolation:
    case ErrorCode::kEmptyUnion:
    case ErrorCode::kWarmUp:
      return kExitInternal;
    default:
      return kExitInput;
  }
}

void report_error(std::string_view tag, const std::string& message,
                  std::optional<std::uint32_t> window) {
  nlohmann::ordered_json j;
  j["error"] = tag;
  j["message"] = message;
  j["window"] = window ? nlohmann::ordered_json(*window) : nlohmann::ordered_json(nullptr);
  std::cerr << j.dump() << '\n';
}

/// Files are written into a scratch directory next to the destination and
/// moved into place only after everything succeeded.
class StagedOutput {
 public:
  explicit StagedOutput(fs::path destination) : destination_(std::move(destination)) {
    const fs::path parent = fs::absolute(destination_).parent_path();
    fs::create_directories(parent);
    scratch_ = parent / ("." + destination_.filename().string() + ".partial-" +
                         std::to_string(::getpid()));
    fs::remove_all(scratch_);
    fs::create_directories(scratch_);
  }
  ~StagedOutput() {
    std::error_code ignored;
    fs::remove_all(scratch_, ignored);
  }

  std::ofstream open(const std::string& name) {
    names_.push_back(name);
    std::ofstream out(scratch_ / name, std::ios::binary);
    if (!out) throw Error(ErrorCode::kInputError, "cannot write " + (scratch_ / name).string());
    return out;
  }

  void commit() {
    fs::create_directories(destination_);
    for (const auto& name : names_) fs::rename(scratch_ / name, destination_ / name);
  }

 private:
  fs::path destination_;
  fs::path scratch_;
  std::vector<std::string> names_;
};

void close_checked(std::ofstream& out, const std::string& name) {
  out.close();
  if (!out) throw Error(ErrorCode::kInputError, "failed writing " + name);
}

std::ifstream open_checked(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInputError, "cannot open " + path.string());
  return in;
}

// ---------------------------------------------------------------------------
// Options shared by detect and eval

struct ConfigOptions {
  std::string config_file;
  std::string preset;
  std::optional<std::string> format, auth, flows, events, labels;
  std::optional<std::int64_t> window_length, time_origin;
  std::optional<std::uint32_t> training, warmup;
  std::optional<std::size_t> k, cap, max_batch;
  std::optional<std::vector<std::string>> scoreable;
  std::optional<std::string> scorer, sidecar_cmd, sidecar_address;
  std::optional<std::vector<std::size_t>> budgets;
  std::optional<std::string> dedup;
  bool no_refine = false;
  bool combined = false;

  void add_input(CLI::App* app) {
    app->add_option("--config", config_file, "JSON config file");
    app->add_option("--preset", preset, "lanl or optc");
    app->add_option("--format", format, "lanl or generic");
    app->add_option("--auth", auth, "LANL auth file");
    app->add_option("--flows", flows, "LANL flows file");
    app->add_option("--events", events, "generic event CSV");
    app->add_option("--labels", labels, "label records (time,user@domain,src,dst)");
    app->add_option("--window-length", window_length, "window length in seconds");
    app->add_option("--time-origin", time_origin, "timestamp of the start of window 0");
    app->add_option("--training-windows", training, "training window count");
    app->add_option("--flow-type-cap", cap, "retained flow types");
    app->add_option("--scoreable", scoreable, "scored relation kinds: auth, flow")->delimiter(',');
  }

  void add_detect(CLI::App* app) {
    app->add_option("-k,--k", k, "number of similar past windows");
    app->add_option("--warmup-windows", warmup, "windows left unscored");
    app->add_option("--scorer", scorer, "native or sidecar");
    app->add_option("--sidecar-cmd", sidecar_cmd, "command that starts the sidecar");
    app->add_option("--sidecar-address", sidecar_address, "host:port of a running sidecar");
    app->add_option("--max-batch", max_batch, "queries per scorer call");
    app->add_flag("--no-refine", no_refine, "skip score refinement");
  }

  void add_eval(CLI::App* app) {
    app->add_option("--budgets", budgets, "Rec@B budgets")->delimiter(',');
    app->add_option("--dedup", dedup, "both, with or without");
    app->add_flag("--combined", combined, "evaluate combined (unrefined) scores");
  }

  RunConfig build() const {
    RunConfig c;
    if (!config_file.empty()) c = load_config(config_file);
    nlohmann::json j = nlohmann::json::object();
    if (!preset.empty()) j["preset"] = preset;
    const auto set = [&](const char* key, const auto& value) {
      if (value) j[key] = *value;
    };
    set("format", format);
    set("auth", auth);
    set("flows", flows);
    set("events", events);
    set("labels", labels);
    set("window_length", window_length);
    set("time_origin", time_origin);
    set("training_window_count", training);
    set("warmup_windows", warmup);
    set("k", k);
    set("flow_type_cap", cap);
    set("max_batch", max_batch);
    set("scoreable", scoreable);
    set("scorer", scorer);
    set("sidecar_command", sidecar_cmd);
    set("sidecar_address", sidecar_address);
    set("budgets", budgets);
    set("dedup", dedup);
    if (no_refine) j["refine"] = false;
    if (combined) j["evaluate_combined"] = true;
    if (!preset.empty() && !config_file.empty()) {
      // A preset flag resets the config file; apply the file's keys again on top.
      RunConfig base = RunConfig::from_preset(preset);
      std::ifstream in(config_file);
      nlohmann::json file = nlohmann::json::parse(in, nullptr, false);
      file.erase("preset");
      apply_json(base, file);
      j.erase("preset");
      c = base;
    }
    apply_json(c, j);
    if (const char* env = std::getenv("LMD_SIDECAR_CMD"); env != nullptr && *env != '\0') {
      c.sidecar_command = env;
    }
    c.validate();
    return c;
  }
};

// ---------------------------------------------------------------------------
// detect

std::unique_ptr<Scorer> make_scorer(const RunConfig& c) {
  if (c.scorer == "native") return std::make_unique<NativeScorer>();
  std::unique_ptr<Transport> transport;
  if (!c.sidecar_address.empty()) {
    const auto colon = c.sidecar_address.rfind(':');
    const auto port = colon == std::string::npos
                          ? std::nullopt
                          : text::parse_int(std::string_view(c.sidecar_address).substr(colon + 1));
    if (!port || *port <= 0 || *port > 65535) {
      throw Error(ErrorCode::kInvalidArgument, "sidecar address must be host:port");
    }
    transport = std::make_unique<SocketTransport>(c.sidecar_address.substr(0, colon),
                                                  static_cast<std::uint16_t>(*port));
  } else {
    if (c.sidecar_command.empty()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "sidecar scorer needs sidecar_command, sidecar_address or LMD_SIDECAR_CMD");
    }
    transport = std::make_unique<ChildProcessTransport>(c.sidecar_command);
  }
  SidecarOptions o;
  o.max_attempts = c.sidecar_attempts;
  o.request_timeout = std::chrono::milliseconds(c.sidecar_timeout_ms);
  o.handshake_timeout = std::chrono::milliseconds(c.handshake_timeout_ms);
  o.max_batch = c.max_batch;
  return std::make_unique<SidecarScorer>(std::move(transport), o);
}

int run_detect(const ConfigOptions& options, const std::string& output, bool verbose) {
  const RunConfig config = options.build();
  StagedOutput staged(output);
  const Dataset dataset = load_dataset(config.sources, config.ingest);
  auto scorer = make_scorer(config);
  std::string model = kNativeModel;
  if (auto* sidecar = dynamic_cast<SidecarScorer*>(scorer.get())) model = sidecar->model();

  const auto progress = [&](const WindowRecord& r) {
    if (!verbose) return;
    std::cerr << "window " << r.window << (r.warm_up ? " warm-up" : "") << " scored=" << r.scored
              << " short_edges=" << r.short_edges << " long_edges=" << r.long_edges << '\n';
  };
  const DetectionRun run = run_detection(dataset, *scorer, config.detection_options(), progress);

  auto edges = staged.open("scored_edges.csv");
  write_scored_edges(edges, run, *dataset.vocabulary);
  close_checked(edges, "scored_edges.csv");
  auto audit = staged.open("retrieval_audit.csv");
  write_retrieval_audit(audit, run);
  close_checked(audit, "retrieval_audit.csv");
  auto timings = staged.open("timings.csv");
  write_timings(timings, run);
  close_checked(timings, "timings.csv");
  auto manifest = staged.open("manifest.json");
  manifest << make_manifest(config, dataset, run, model).dump(2) << '\n';
  close_checked(manifest, "manifest.json");
  staged.commit();

  std::size_t scored = 0;
  for (const auto& e : run.edges) scored += e.s_combined ? 1 : 0;
  std::cout << "windows=" << run.windows.size() << " scored_edges=" << scored
            << " output=" << output << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// eval / report

std::vector<ScoredRow> load_rows(const fs::path& run_dir) {
  auto in = open_checked(run_dir / "scored_edges.csv");
  return read_scored_edges(in);
}

int run_eval(const ConfigOptions& options, const std::string& run_dir, std::string output) {
  const RunConfig config = options.build();
  if (output.empty()) output = run_dir;
  std::vector<ScoredRow> rows = load_rows(run_dir);
  if (!config.sources.labels.empty()) {
    IngestReport report;
    auto in = open_checked(config.sources.labels);
    const auto records = parse_label_records(in, report);
    relabel(rows, records, config.ingest);
  }
  const ScoreKind kind = config.evaluate_combined ? ScoreKind::kCombined : ScoreKind::kRefined;
  const auto ranked = ranked_rows(rows, kind);

  std::vector<EvaluationReport> reports;
  if (config.dedup != DedupMode::kWithout) {
    reports.push_back(evaluate(ranked, config.budgets, kind, false));
  }
  if (config.dedup != DedupMode::kWith) {
    reports.push_back(evaluate(ranked, config.budgets, kind, true));
  }

  StagedOutput staged(output);
  auto csv = staged.open("metrics.csv");
  write_metrics_csv(csv, reports);
  close_checked(csv, "metrics.csv");
  auto json = staged.open("metrics.json");
  json << metrics_json(reports).dump(2) << '\n';
  close_checked(json, "metrics.json");
  auto pct = staged.open("percentiles.csv");
  write_percentiles(pct, percentile_series(ranked, window_count(rows)));
  close_checked(pct, "percentiles.csv");
  staged.commit();
  std::cout << metrics_table(reports);
  return kExitOk;
}

int run_report(const std::string& run_dir, std::string output, bool combined) {
  if (output.empty()) output = run_dir;
  const std::vector<ScoredRow> rows = load_rows(run_dir);
  auto timing_in = open_checked(fs::path(run_dir) / "timings.csv");
  const auto timings = read_timings(timing_in);
  const ScoreKind kind = combined ? ScoreKind::kCombined : ScoreKind::kRefined;

  StagedOutput staged(output);
  auto pct = staged.open("percentiles.csv");
  write_percentiles(pct, percentile_series(ranked_rows(rows, kind), window_count(rows)));
  close_checked(pct, "percentiles.csv");
  auto mal = staged.open("malicious_scores.csv");
  write_malicious_scores(mal, rows, kind);
  close_checked(mal, "malicious_scores.csv");
  auto summary = staged.open("timing_summary.csv");
  write_timing_summary(summary, timings);
  close_checked(summary, "timing_summary.csv");
  staged.commit();
  std::cout << "report written to " << output << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// synth / serve-native

int run_synth(const std::string& preset, std::optional<std::uint64_t> seed,
              std::optional<std::uint32_t> windows, const std::string& output) {
  SynthConfig c;
  if (preset == "standard") {
    c = SynthConfig::standard();
  } else if (preset == "mini") {
    c = SynthConfig::mini();
  } else {
    throw Error(ErrorCode::kInvalidArgument, "synth preset must be standard or mini");
  }
  if (seed) c.seed = *seed;
  if (windows) c.windows = *windows;
  const SynthData data = generate_synthetic(c);

  StagedOutput staged(output);
  auto events = staged.open("events.csv");
  write_generic_events(events, data.events);
  close_checked(events, "events.csv");
  auto labels = staged.open("labels.csv");
  write_label_records(labels, data.labels);
  close_checked(labels, "labels.csv");
  // A config that runs detect on this data from inside the output directory.
  nlohmann::ordered_json config;
  config["format"] = "generic";
  config["events"] = "events.csv";
  config["labels"] = "labels.csv";
  config["window_length"] = c.window_length;
  config["training_window_count"] = c.first_attack_window / 2;
  config["scoreable"] = {"flow"};
  config["k"] = 5;
  auto cfg = staged.open("config.json");
  cfg << config.dump(2) << '\n';
  close_checked(cfg, "config.json");
  staged.commit();
  std::cout << "events=" << data.events.size() << " labels=" << data.labels.size()
            << " output=" << output << '\n';
  return kExitOk;
}

int run_serve_native(const std::string& model) {
  SidecarServer server(std::make_unique<NativeScorer>(), model);
  std::ios::sync_with_stdio(false);
  server.serve(std::cin, std::cout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lateral-movement detection over windowed knowledge graphs"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "per-window progress on stderr");

  ConfigOptions detect_options;
  std::string detect_output;
  auto* detect = app.add_subcommand("detect", "score every window of a dataset");
  detect_options.add_input(detect);
  detect_options.add_detect(detect);
  detect->add_option("-o,--output", detect_output, "output directory")->required();

  ConfigOptions eval_options;
  std::string eval_run, eval_output;
  auto* eval = app.add_subcommand("eval", "compute AUC, AP and Rec@B for a detect run");
  eval->add_option("--run", eval_run, "detect output directory")->required();
  eval->add_option("-o,--output", eval_output, "output directory (default: the run directory)");
  eval_options.add_input(eval);
  eval_options.add_eval(eval);

  std::string report_run, report_output;
  bool report_combined = false;
  auto* report = app.add_subcommand("report", "percentile, malicious-score and timing CSVs");
  report->add_option("--run", report_run, "detect output directory")->required();
  report->add_option("-o,--output", report_output, "output directory (default: the run directory)");
  report->add_flag("--combined", report_combined, "use combined (unrefined) scores");

  std::string synth_preset = "standard", synth_output;
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::uint32_t> synth_windows;
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset with injected attacks");
  synth->add_option("--preset", synth_preset, "standard or mini");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--windows", synth_windows, "number of windows");
  synth->add_option("-o,--output", synth_output, "output directory")->required();

  std::string serve_model = kNativeModel;
  auto* serve = app.add_subcommand("serve-native",
                                   "answer the scorer wire protocol on stdin/stdout");
  serve->add_option("--model", serve_model, "model tag returned by ping");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*detect) return run_detect(detect_options, detect_output, verbose);
    if (*eval) return run_eval(eval_options, eval_run, eval_output);
    if (*report) return run_report(report_run, report_output, report_combined);
    if (*synth) return run_synth(synth_preset, synth_seed, synth_windows, synth_output);
    if (*serve) return run_serve_native(serve_model);
  } catch (const Error& e) {
    report_error(to_string(e.code()), e.what(), e.window());
    return exit_code(e.code());
  } catch (const fs::filesystem_error& e) {
    report_error("input-error", e.what(), std::nullopt);
    return kExitInput;
  } catch (const std::exception& e) {
    report_error("internal", e.what(), std::nullopt);
    return kExitInternal;
  }
  return kExitInternal;
}
