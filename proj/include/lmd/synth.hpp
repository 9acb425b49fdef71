#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "lmd/ingest.hpp"

namespace lmd {

/// Parameters of the synthetic flow dataset. Benign traffic is a fixed pool
/// of habitual host pairs that recur window after window (some only during
/// "day" phases), plus a few one-off noise flows per window that share no
/// endpoint with each other. The attack is a chain of fans: a compromised
/// host contacts several new targets over SMB, and one of those targets
/// starts the next fan later.
struct SynthConfig {
  std::uint64_t seed = 7;
  std::uint32_t windows = 200;
  std::int64_t window_length = 360;
  std::uint32_t hosts = 300;
  std::uint32_t habitual_pairs = 620;
  double day_only_fraction = 0.3;
  std::uint32_t day_night_period = 24;  // windows; first half of each period is day
  double recurrence = 0.9;
  std::uint32_t noise_per_window = 5;
  std::uint32_t users = 60;
  std::uint32_t servers = 10;
  double logon_probability = 0.5;
  std::uint32_t fans = 5;
  std::uint32_t fan_size = 4;
  std::uint32_t first_attack_window = 40;
  std::uint32_t attack_spacing = 30;

  /// ~200 windows of ~500 flow edges with 20 injected edges.
  static SynthConfig standard();
  /// Small variant used for committed golden files.
  static SynthConfig mini();
};

struct SynthData {
  std::vector<RawEvent> events;     // sorted by timestamp
  std::vector<LabelRecord> labels;  // one per injected edge
};

/// Deterministic for a given config on every platform: only raw 64-bit
/// generator outputs are used, never library distributions.
SynthData generate_synthetic(const SynthConfig& config);

/// Writes the generic event CSV (with header) accepted by parse_generic_events.
void write_generic_events(std::ostream& out, std::span<const RawEvent> events);
/// Writes time,user@domain,src,dst rows.
void write_label_records(std::ostream& out, std::span<const LabelRecord> labels);

}  // namespace lmd
