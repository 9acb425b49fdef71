#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "lmd/graph.hpp"

namespace lmd {

enum class EventKind : std::uint8_t { kAuth, kFlow };

/// One parsed log record. Auth events use user/domain/auth fields; flow
/// events use protocol/dst_port.
struct RawEvent {
  std::int64_t timestamp = 0;
  EventKind kind = EventKind::kAuth;
  std::string user;    // account name without domain
  std::string domain;  // may be empty
  std::string src_host;
  std::string dst_host;
  std::string auth_package;
  std::string logon_type;
  std::string orientation;
  std::string outcome;
  std::string protocol;
  std::string dst_port;
};

struct Diagnostic {
  std::size_t line = 0;  // 1-based; 0 when not tied to an input line
  std::string reason;
  std::string text;
};

/// Counters and a bounded sample of diagnostics for one ingestion pass.
struct IngestReport {
  static constexpr std::size_t kMaxStoredDiagnostics = 1000;

  std::size_t lines = 0;
  std::size_t events = 0;
  std::size_t malformed = 0;
  std::size_t filtered = 0;  // well-formed but not a log-on event
  std::size_t skipped = 0;   // dropped while building graphs (pre-origin, kind conflict)
  std::size_t failed_auth = 0;
  std::vector<Diagnostic> diagnostics;

  void add(Diagnostic diagnostic);
};

using EventSink = std::function<void(RawEvent&&)>;

/// time,srcUser@dom,dstUser@dom,srcHost,dstHost,authPackage,logonType,orientation,outcome
/// Emits log-on events only; every authentication package is kept.
void parse_lanl_auth(std::istream& in, const EventSink& sink, IngestReport& report);
/// time,duration,srcHost,srcPort,dstHost,dstPort,protocol,packets,bytes
void parse_lanl_flows(std::istream& in, const EventSink& sink, IngestReport& report);
/// Header row required: kind,timestamp,user,domain,src,dst,field1,field2
/// (any column order). field1/field2 are package/logon type for auth rows and
/// protocol/port for flow rows.
void parse_generic_events(std::istream& in, const EventSink& sink, IngestReport& report);

std::vector<RawEvent> collect(const std::function<void(const EventSink&)>& producer);

struct LabelRecord {
  std::int64_t timestamp = 0;
  std::string user;
  std::string src_host;
  std::string dst_host;
};

/// time,user@domain,srcHost,dstHost. An optional header row is skipped.
std::vector<LabelRecord> parse_label_records(std::istream& in, IngestReport& report);

/// Which relation kinds receive anomaly scores.
struct ScoreablePredicate {
  bool auth = true;
  bool flow = false;

  bool operator()(RelationKind kind) const;
  bool operator()(const RelationDescriptor& d) const { return (*this)(d.kind); }
};

struct IngestConfig {
  std::int64_t window_length = 3600;
  std::int64_t time_origin = 0;
  std::uint32_t training_window_count = 1;
  std::size_t flow_type_cap = 20;
  ScoreablePredicate scoreable;
  std::vector<std::string> builtin_account_names = {"SYSTEM", "LOCAL SERVICE",
                                                    "NETWORK SERVICE", "ANONYMOUS LOGON"};

  /// Throws Error(kInvalidArgument) on a violated invariant.
  void validate() const;
};

/// floor(timestamp / window_length). Throws Error(kPreOriginEvent) for
/// negative timestamps.
WindowIndex assign_window(std::int64_t timestamp, std::int64_t window_length);

using FlowKey = std::pair<std::string, std::string>;  // (protocol, port)
using FlowTypeSet = std::set<FlowKey>;

/// Top-`cap` flow types by event count; ties broken by lexicographic
/// (protocol, port).
FlowTypeSet cap_flow_types(const std::map<FlowKey, std::uint64_t>& counts, std::size_t cap);

/// Counts flow events that fall into the training windows.
class FlowTypeCounter {
 public:
  explicit FlowTypeCounter(const IngestConfig& config) : config_(config) {}
  void add(const RawEvent& event);
  const std::map<FlowKey, std::uint64_t>& counts() const { return counts_; }
  FlowTypeSet retained() const { return cap_flow_types(counts_, config_.flow_type_cap); }

 private:
  IngestConfig config_;
  std::map<FlowKey, std::uint64_t> counts_;
};

/// Account classification: names ending in '$' are computer accounts,
/// names matching a built-in pattern (case-insensitive, trailing '*' is a
/// prefix wildcard) are built-in accounts, everything else is a user.
EntityKind classify_account(std::string_view name, std::span<const std::string> builtin_patterns);

/// Turns events into per-window knowledge graphs:
///  - remote auth: src host -Auth(package, logon type)-> dst host
///  - flow: src host -Flow(protocol, port) or FlowOther-> dst host
///  - auth: user -LogonFrom-> src host, user -LogonTo-> dst host
///  - user/computer account -MemberOf-> domain
///  - every entity -HasType-> its type node
class WindowGraphBuilder {
 public:
  WindowGraphBuilder(Vocabulary& vocabulary, IngestConfig config, FlowTypeSet retained_flows);

  /// Events that cannot be placed are recorded in `report` and dropped.
  void add(const RawEvent& event, IngestReport& report);

  /// Windows 0..max observed ordinal (or `min_windows`-1 if larger); windows
  /// without events are empty graphs.
  std::vector<WindowGraph> finish(std::size_t min_windows = 0);

  /// Events accepted per window, for partition checks.
  const std::map<WindowIndex, std::size_t>& event_counts() const { return event_counts_; }

 private:
  EntityId account(const std::string& user, const std::string& domain, std::vector<Edge>& out);

  Vocabulary& vocabulary_;
  IngestConfig config_;
  FlowTypeSet retained_flows_;
  std::map<WindowIndex, std::vector<Edge>> edges_;
  std::map<WindowIndex, std::size_t> event_counts_;
};

/// Builds the graph of a single window from its events. Throws
/// Error(kInvalidArgument) if an event falls outside window `t`.
WindowGraph build_window_graph(WindowIndex t, std::span<const RawEvent> events,
                               Vocabulary& vocabulary, const IngestConfig& config,
                               const FlowTypeSet& retained_flows, IngestReport& report);

struct LabelAssignment {
  /// (window, edge) pairs labeled malicious, sorted.
  std::vector<std::pair<WindowIndex, Edge>> malicious;
  std::vector<LabelRecord> unmatched;
  std::size_t matched_records = 0;

  bool is_malicious(WindowIndex window, const Edge& edge) const;
};

/// A scoreable edge (u, r, v) of window t is malicious iff a record with
/// source host u and destination host v falls in window t. The user field is
/// not used for matching.
LabelAssignment attach_labels(std::span<const WindowGraph> windows,
                              std::span<const LabelRecord> records, const IngestConfig& config,
                              const Vocabulary& vocabulary);

}  // namespace lmd
