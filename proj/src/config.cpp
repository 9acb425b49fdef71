#include "lmd/config.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <type_traits>

#include "lmd/error.hpp"

namespace lmd {

namespace {

[[noreturn]] void invalid(const std::string& why) {
  throw Error(ErrorCode::kInvalidArgument, "config: " + why);
}

template <typename T>
T value_of(const nlohmann::json& j, const std::string& key) {
  if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
    if (!j.is_number_unsigned()) invalid("\"" + key + "\" must be a non-negative integer");
  } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
    if (!j.is_array() || !std::all_of(j.begin(), j.end(), [](const auto& v) {
          return v.is_number_unsigned();
        })) {
      invalid("\"" + key + "\" must be a list of non-negative integers");
    }
  }
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    invalid("bad value for \"" + key + "\": " + j.dump());
  }
}

InputFormat parse_format(const std::string& s) {
  if (s == "lanl") return InputFormat::kLanl;
  if (s == "generic") return InputFormat::kGeneric;
  invalid("format must be \"lanl\" or \"generic\", got \"" + s + "\"");
}

DedupMode parse_dedup(const std::string& s) {
  if (s == "both") return DedupMode::kBoth;
  if (s == "with") return DedupMode::kWith;
  if (s == "without") return DedupMode::kWithout;
  invalid("dedup must be both, with or without");
}

ScoreablePredicate parse_scoreable(const std::vector<std::string>& kinds) {
  ScoreablePredicate p{false, false};
  for (const auto& k : kinds) {
    if (k == "auth") {
      p.auth = true;
    } else if (k == "flow") {
      p.flow = true;
    } else {
      invalid("scoreable entries must be \"auth\" or \"flow\", got \"" + k + "\"");
    }
  }
  return p;
}

}  // namespace

std::string_view to_string(DedupMode mode) {
  switch (mode) {
    case DedupMode::kBoth: return "both";
    case DedupMode::kWith: return "with";
    case DedupMode::kWithout: return "without";
  }
  return "both";
}

std::string_view to_string(InputFormat format) {
  return format == InputFormat::kLanl ? "lanl" : "generic";
}

RunConfig RunConfig::from_preset(const std::string& name) {
  RunConfig c;
  c.preset = name;
  if (name == "lanl") {
    c.sources.format = InputFormat::kLanl;
    c.ingest.window_length = 3600;
    c.ingest.training_window_count = 41;
    c.ingest.scoreable = {true, false};
    c.k = 10;
  } else if (name == "optc") {
    c.sources.format = InputFormat::kGeneric;
    c.ingest.window_length = 360;
    c.ingest.training_window_count = 1440;
    c.ingest.scoreable = {false, true};
    c.k = 100;
  } else {
    invalid("unknown preset \"" + name + "\" (expected lanl or optc)");
  }
  return c;
}

DetectionOptions RunConfig::detection_options() const {
  DetectionOptions o;
  o.k = k;
  o.warmup_windows = effective_warmup();
  o.refine = refine;
  o.scoreable = ingest.scoreable;
  o.scoring.max_batch = max_batch;
  return o;
}

void RunConfig::validate() const {
  ingest.validate();
  if (budgets.empty()) invalid("budgets must not be empty");
  if (std::any_of(budgets.begin(), budgets.end(), [](std::size_t b) { return b == 0; })) {
    invalid("budgets must be positive");
  }
  if (scorer != "native" && scorer != "sidecar") invalid("scorer must be native or sidecar");
  if (max_batch == 0) invalid("max_batch must be positive");
  if (sidecar_attempts < 1) invalid("sidecar_attempts must be at least 1");
  if (sidecar_timeout_ms <= 0 || handshake_timeout_ms <= 0) invalid("timeouts must be positive");
  if (!ingest.scoreable.auth && !ingest.scoreable.flow) invalid("nothing is scoreable");
}

void apply_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) invalid("top level must be an object");
  if (auto p = j.find("preset"); p != j.end()) c = RunConfig::from_preset(value_of<std::string>(*p, "preset"));
  for (const auto& [key, v] : j.items()) {
    if (key == "preset") continue;
    if (key == "format") {
      c.sources.format = parse_format(value_of<std::string>(v, key));
    } else if (key == "auth") {
      c.sources.auth = value_of<std::string>(v, key);
    } else if (key == "flows") {
      c.sources.flows = value_of<std::string>(v, key);
    } else if (key == "events") {
      c.sources.events = value_of<std::string>(v, key);
    } else if (key == "labels") {
      c.sources.labels = value_of<std::string>(v, key);
    } else if (key == "window_length") {
      c.ingest.window_length = value_of<std::int64_t>(v, key);
    } else if (key == "time_origin") {
      c.ingest.time_origin = value_of<std::int64_t>(v, key);
    } else if (key == "training_window_count") {
      c.ingest.training_window_count = value_of<std::uint32_t>(v, key);
    } else if (key == "flow_type_cap") {
      c.ingest.flow_type_cap = value_of<std::size_t>(v, key);
    } else if (key == "scoreable") {
      c.ingest.scoreable = parse_scoreable(value_of<std::vector<std::string>>(v, key));
    } else if (key == "builtin_accounts") {
      c.ingest.builtin_account_names = value_of<std::vector<std::string>>(v, key);
    } else if (key == "k") {
      c.k = value_of<std::size_t>(v, key);
    } else if (key == "warmup_windows") {
      c.warmup_windows = value_of<std::uint32_t>(v, key);
    } else if (key == "scorer") {
      c.scorer = value_of<std::string>(v, key);
    } else if (key == "sidecar_command") {
      c.sidecar_command = value_of<std::string>(v, key);
    } else if (key == "sidecar_address") {
      c.sidecar_address = value_of<std::string>(v, key);
    } else if (key == "sidecar_timeout_ms") {
      c.sidecar_timeout_ms = value_of<std::int64_t>(v, key);
    } else if (key == "handshake_timeout_ms") {
      c.handshake_timeout_ms = value_of<std::int64_t>(v, key);
    } else if (key == "sidecar_attempts") {
      c.sidecar_attempts = value_of<int>(v, key);
    } else if (key == "max_batch") {
      c.max_batch = value_of<std::size_t>(v, key);
    } else if (key == "budgets") {
      c.budgets = value_of<std::vector<std::size_t>>(v, key);
    } else if (key == "dedup") {
      c.dedup = parse_dedup(value_of<std::string>(v, key));
    } else if (key == "refine") {
      c.refine = value_of<bool>(v, key);
    } else if (key == "evaluate_combined") {
      c.evaluate_combined = value_of<bool>(v, key);
    } else {
      invalid("unknown key \"" + key + "\"");
    }
  }
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kInputError, "cannot open config " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorCode::kInputError, "config " + path + " is not valid JSON");
  RunConfig c;
  apply_json(c, j);
  // Data paths in a config file are relative to the file itself.
  const auto base = std::filesystem::path(path).parent_path();
  for (std::string* p : {&c.sources.auth, &c.sources.flows, &c.sources.events, &c.sources.labels}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) {
      *p = (base / *p).lexically_normal().string();
    }
  }
  return c;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["preset"] = c.preset;
  j["format"] = to_string(c.sources.format);
  j["auth"] = c.sources.auth;
  j["flows"] = c.sources.flows;
  j["events"] = c.sources.events;
  j["labels"] = c.sources.labels;
  j["window_length"] = c.ingest.window_length;
  j["time_origin"] = c.ingest.time_origin;
  j["training_window_count"] = c.ingest.training_window_count;
  j["flow_type_cap"] = c.ingest.flow_type_cap;
  std::vector<std::string> scoreable;
  if (c.ingest.scoreable.auth) scoreable.push_back("auth");
  if (c.ingest.scoreable.flow) scoreable.push_back("flow");
  j["scoreable"] = scoreable;
  j["builtin_accounts"] = c.ingest.builtin_account_names;
  j["k"] = c.k;
  j["warmup_windows"] = c.effective_warmup();
  j["scorer"] = c.scorer;
  j["sidecar_command"] = c.sidecar_command;
  j["sidecar_address"] = c.sidecar_address;
  j["max_batch"] = c.max_batch;
  j["budgets"] = c.budgets;
  j["dedup"] = to_string(c.dedup);
  j["refine"] = c.refine;
  j["evaluate_combined"] = c.evaluate_combined;
  return j;
}

}  // namespace lmd
