#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmd/ingest.hpp"
#include "lmd/pipeline.hpp"

namespace lmd {

enum class DedupMode : std::uint8_t { kBoth, kWith, kWithout };

/// Everything a run needs. Keys of the JSON config file mirror the member
/// names (see README for the list).
struct RunConfig {
  std::string preset;
  DataSources sources;
  IngestConfig ingest;
  std::size_t k = 10;
  /// Defaults to ingest.training_window_count when unset.
  std::optional<std::uint32_t> warmup_windows;

  std::string scorer = "native";  // native | sidecar
  std::string sidecar_command;
  std::string sidecar_address;    // host:port; selects the socket transport
  std::int64_t sidecar_timeout_ms = 600000;
  std::int64_t handshake_timeout_ms = 10000;
  int sidecar_attempts = 3;
  std::size_t max_batch = 512;

  std::vector<std::size_t> budgets = {3, 5, 10};
  DedupMode dedup = DedupMode::kBoth;
  bool refine = true;
  bool evaluate_combined = false;

  /// Documented presets: "lanl" (3600 s windows, K = 10, 41 training
  /// windows, auth edges scored) and "optc" (360 s windows, K = 100, 1440
  /// training windows, flow edges scored). Throws Error(kInvalidArgument)
  /// for other names.
  static RunConfig from_preset(const std::string& name);

  std::uint32_t effective_warmup() const {
    return warmup_windows.value_or(ingest.training_window_count);
  }
  DetectionOptions detection_options() const;

  /// Throws Error(kInvalidArgument) on a violated invariant.
  void validate() const;
};

/// Applies the members present in `j` on top of `config`. A "preset" key
/// is applied first. Unknown keys are rejected with Error(kInvalidArgument).
void apply_json(RunConfig& config, const nlohmann::json& j);
/// Reads a JSON config file. Relative data paths resolve against the
/// file's directory. Throws Error(kInputError) if unreadable.
RunConfig load_config(const std::string& path);

/// Echo of the effective configuration, in a fixed key order.
nlohmann::ordered_json to_json(const RunConfig& config);

std::string_view to_string(DedupMode mode);
std::string_view to_string(InputFormat format);

}  // namespace lmd
