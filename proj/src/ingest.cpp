#include "lmd/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <tuple>
#include <unordered_map>

#include "lmd/error.hpp"
#include "lmd/text.hpp"

namespace lmd {

namespace {

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::toupper(static_cast<unsigned char>(a[i])) !=
        std::toupper(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

bool matches_pattern(std::string_view name, std::string_view pattern) {
  if (!pattern.empty() && pattern.back() == '*') {
    pattern.remove_suffix(1);
    return name.size() >= pattern.size() && iequals(name.substr(0, pattern.size()), pattern);
  }
  return iequals(name, pattern);
}

std::pair<std::string, std::string> split_account(std::string_view account) {
  const auto at = account.rfind('@');
  if (at == std::string_view::npos) return {std::string(account), {}};
  return {std::string(account.substr(0, at)), std::string(account.substr(at + 1))};
}

void malformed(IngestReport& report, std::size_t line, std::string reason, std::string_view text) {
  ++report.malformed;
  report.add(Diagnostic{line, std::move(reason), std::string(text)});
}

bool any_empty(std::initializer_list<const std::string*> fields) {
  return std::any_of(fields.begin(), fields.end(), [](const std::string* f) { return f->empty(); });
}

// Drives `handle` over every non-blank line, keeping line numbers.
template <typename Handler>
void for_each_line(std::istream& in, Handler&& handle) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string_view view = text::chomp(line);
    if (text::trim(view).empty()) continue;
    handle(number, view);
  }
}

}  // namespace

void IngestReport::add(Diagnostic diagnostic) {
  if (diagnostics.size() < kMaxStoredDiagnostics) diagnostics.push_back(std::move(diagnostic));
}

// ---------------------------------------------------------------------------
// Parsers

void parse_lanl_auth(std::istream& in, const EventSink& sink, IngestReport& report) {
  for_each_line(in, [&](std::size_t number, std::string_view line) {
    ++report.lines;
    auto fields = text::split_csv(line);
    if (!fields || fields->size() != 9) {
      malformed(report, number, "expected 9 fields", line);
      return;
    }
    auto& f = *fields;
    const auto timestamp = text::parse_int(f[0]);
    if (!timestamp) {
      malformed(report, number, "bad timestamp", line);
      return;
    }
    RawEvent event;
    event.timestamp = *timestamp;
    event.kind = EventKind::kAuth;
    std::tie(event.user, event.domain) = split_account(f[1]);
    event.src_host = std::move(f[3]);
    event.dst_host = std::move(f[4]);
    event.auth_package = std::move(f[5]);
    event.logon_type = std::move(f[6]);
    event.orientation = std::move(f[7]);
    event.outcome = std::move(f[8]);
    if (any_empty({&event.user, &event.src_host, &event.dst_host, &event.auth_package,
                   &event.logon_type, &event.orientation})) {
      malformed(report, number, "empty field", line);
      return;
    }
    if (event.orientation != "LogOn") {
      ++report.filtered;
      return;
    }
    if (event.outcome != "Success") ++report.failed_auth;
    ++report.events;
    sink(std::move(event));
  });
}

void parse_lanl_flows(std::istream& in, const EventSink& sink, IngestReport& report) {
  for_each_line(in, [&](std::size_t number, std::string_view line) {
    ++report.lines;
    auto fields = text::split_csv(line);
    if (!fields || fields->size() != 9) {
      malformed(report, number, "expected 9 fields", line);
      return;
    }
    auto& f = *fields;
    const auto timestamp = text::parse_int(f[0]);
    if (!timestamp) {
      malformed(report, number, "bad timestamp", line);
      return;
    }
    RawEvent event;
    event.timestamp = *timestamp;
    event.kind = EventKind::kFlow;
    event.src_host = std::move(f[2]);
    event.dst_host = std::move(f[4]);
    event.dst_port = std::move(f[5]);
    event.protocol = std::move(f[6]);
    if (any_empty({&event.src_host, &event.dst_host, &event.dst_port, &event.protocol})) {
      malformed(report, number, "empty field", line);
      return;
    }
    ++report.events;
    sink(std::move(event));
  });
}

void parse_generic_events(std::istream& in, const EventSink& sink, IngestReport& report) {
  static constexpr std::string_view kColumns[] = {"kind", "timestamp", "user", "domain",
                                                  "src",  "dst",       "field1", "field2"};
  std::unordered_map<std::string, std::size_t> column;
  bool have_header = false;
  std::size_t width = 0;
  for_each_line(in, [&](std::size_t number, std::string_view line) {
    auto fields = text::split_csv(line);
    if (!have_header) {
      if (!fields) throw Error(ErrorCode::kInputError, "unreadable event CSV header");
      for (std::size_t i = 0; i < fields->size(); ++i) {
        column[std::string(text::trim((*fields)[i]))] = i;
      }
      for (auto name : kColumns) {
        if (!column.contains(std::string(name))) {
          throw Error(ErrorCode::kInputError,
                      "event CSV header lacks column '" + std::string(name) + "'");
        }
      }
      width = fields->size();
      have_header = true;
      return;
    }
    ++report.lines;
    if (!fields || fields->size() != width) {
      malformed(report, number, "expected " + std::to_string(width) + " fields", line);
      return;
    }
    auto get = [&](std::string_view name) -> std::string& {
      return (*fields)[column.at(std::string(name))];
    };
    const auto timestamp = text::parse_int(get("timestamp"));
    if (!timestamp) {
      malformed(report, number, "bad timestamp", line);
      return;
    }
    RawEvent event;
    event.timestamp = *timestamp;
    event.src_host = std::move(get("src"));
    event.dst_host = std::move(get("dst"));
    const std::string kind(text::trim(get("kind")));
    if (kind == "auth") {
      event.kind = EventKind::kAuth;
      event.user = std::move(get("user"));
      event.domain = std::move(get("domain"));
      event.auth_package = std::move(get("field1"));
      event.logon_type = std::move(get("field2"));
      event.orientation = "LogOn";
      if (any_empty({&event.user, &event.src_host, &event.dst_host, &event.auth_package,
                     &event.logon_type})) {
        malformed(report, number, "empty field", line);
        return;
      }
    } else if (kind == "flow") {
      event.kind = EventKind::kFlow;
      event.protocol = std::move(get("field1"));
      event.dst_port = std::move(get("field2"));
      if (any_empty({&event.src_host, &event.dst_host, &event.protocol, &event.dst_port})) {
        malformed(report, number, "empty field", line);
        return;
      }
    } else {
      malformed(report, number, "unknown event kind '" + kind + "'", line);
      return;
    }
    ++report.events;
    sink(std::move(event));
  });
}

std::vector<RawEvent> collect(const std::function<void(const EventSink&)>& producer) {
  std::vector<RawEvent> events;
  producer([&](RawEvent&& e) { events.push_back(std::move(e)); });
  return events;
}

std::vector<LabelRecord> parse_label_records(std::istream& in, IngestReport& report) {
  std::vector<LabelRecord> records;
  bool first = true;
  for_each_line(in, [&](std::size_t number, std::string_view line) {
    auto fields = text::split_csv(line);
    const bool header_candidate = first;
    first = false;
    if (!fields || fields->size() != 4) {
      ++report.lines;
      malformed(report, number, "expected 4 fields", line);
      return;
    }
    const auto timestamp = text::parse_int((*fields)[0]);
    if (!timestamp) {
      if (header_candidate) return;
      ++report.lines;
      malformed(report, number, "bad timestamp", line);
      return;
    }
    ++report.lines;
    ++report.events;
    records.push_back(LabelRecord{*timestamp, std::move((*fields)[1]), std::move((*fields)[2]),
                                  std::move((*fields)[3])});
  });
  return records;
}

// ---------------------------------------------------------------------------
// Configuration and windowing

bool ScoreablePredicate::operator()(RelationKind kind) const {
  switch (kind) {
    case RelationKind::kAuth: return auth;
    case RelationKind::kFlow:
    case RelationKind::kFlowOther: return flow;
    default: return false;
  }
}

void IngestConfig::validate() const {
  if (window_length <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "window length must be positive");
  }
  if (training_window_count < 1) {
    throw Error(ErrorCode::kInvalidArgument, "training window count must be at least 1");
  }
}

WindowIndex assign_window(std::int64_t timestamp, std::int64_t window_length) {
  if (window_length <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "window length must be positive");
  }
  if (timestamp < 0) {
    throw Error(ErrorCode::kPreOriginEvent,
                "timestamp " + std::to_string(timestamp) + " precedes the dataset origin");
  }
  return static_cast<WindowIndex>(timestamp / window_length);
}

FlowTypeSet cap_flow_types(const std::map<FlowKey, std::uint64_t>& counts, std::size_t cap) {
  std::vector<std::pair<FlowKey, std::uint64_t>> ranked(counts.begin(), counts.end());
  // `counts` is already in lexicographic key order, so a stable sort on the
  // count alone leaves ties in lexicographic order.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  FlowTypeSet kept;
  for (std::size_t i = 0; i < ranked.size() && i < cap; ++i) kept.insert(ranked[i].first);
  return kept;
}

void FlowTypeCounter::add(const RawEvent& event) {
  if (event.kind != EventKind::kFlow) return;
  const std::int64_t shifted = event.timestamp - config_.time_origin;
  if (shifted < 0) return;
  if (assign_window(shifted, config_.window_length) >= config_.training_window_count) return;
  ++counts_[{event.protocol, event.dst_port}];
}

EntityKind classify_account(std::string_view name, std::span<const std::string> builtin_patterns) {
  for (const auto& pattern : builtin_patterns) {
    if (matches_pattern(name, pattern)) return EntityKind::kBuiltinAccount;
  }
  if (!name.empty() && name.back() == '$') return EntityKind::kComputerAccount;
  return EntityKind::kUserAccount;
}

// ---------------------------------------------------------------------------
// Graph construction

WindowGraphBuilder::WindowGraphBuilder(Vocabulary& vocabulary, IngestConfig config,
                                       FlowTypeSet retained_flows)
    : vocabulary_(vocabulary), config_(std::move(config)), retained_flows_(std::move(retained_flows)) {
  config_.validate();
}

EntityId WindowGraphBuilder::account(const std::string& user, const std::string& domain,
                                     std::vector<Edge>& out) {
  const EntityKind kind = classify_account(user, config_.builtin_account_names);
  const EntityId id = vocabulary_.intern_entity(domain.empty() ? user : user + "@" + domain, kind);
  if (!domain.empty()) {
    // Domain nodes live in their own label namespace: LANL local accounts
    // use the host name as domain, which would otherwise clash with the host.
    const EntityId dom = vocabulary_.intern_entity("domain:" + domain, EntityKind::kDomain);
    out.push_back(
        {id, vocabulary_.intern_relation(RelationDescriptor::simple(RelationKind::kMemberOf)), dom});
  }
  return id;
}

void WindowGraphBuilder::add(const RawEvent& event, IngestReport& report) {
  WindowIndex t = 0;
  try {
    t = assign_window(event.timestamp - config_.time_origin, config_.window_length);
  } catch (const Error&) {
    ++report.skipped;
    report.add(Diagnostic{0, "pre-origin event", std::to_string(event.timestamp)});
    return;
  }
  std::vector<Edge> edges;
  try {
    const EntityId src = vocabulary_.intern_entity(event.src_host, EntityKind::kComputer);
    const EntityId dst = vocabulary_.intern_entity(event.dst_host, EntityKind::kComputer);
    if (event.kind == EventKind::kAuth) {
      if (src != dst) {
        edges.push_back({src,
                         vocabulary_.intern_relation(
                             RelationDescriptor::auth(event.auth_package, event.logon_type)),
                         dst});
      }
      const EntityId user = account(event.user, event.domain, edges);
      edges.push_back(
          {user, vocabulary_.intern_relation(RelationDescriptor::simple(RelationKind::kLogonFrom)),
           src});
      edges.push_back(
          {user, vocabulary_.intern_relation(RelationDescriptor::simple(RelationKind::kLogonTo)),
           dst});
    } else {
      const FlowKey key{event.protocol, event.dst_port};
      const RelationDescriptor descriptor =
          retained_flows_.contains(key) ? RelationDescriptor::flow(key.first, key.second)
                                        : RelationDescriptor::simple(RelationKind::kFlowOther);
      edges.push_back({src, vocabulary_.intern_relation(descriptor), dst});
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kKindConflict) throw;
    ++report.skipped;
    report.add(Diagnostic{0, "kind conflict", e.what()});
    return;
  }
  auto& bucket = edges_[t];
  bucket.insert(bucket.end(), edges.begin(), edges.end());
  ++event_counts_[t];
}

std::vector<WindowGraph> WindowGraphBuilder::finish(std::size_t min_windows) {
  std::size_t count = min_windows;
  if (!edges_.empty()) count = std::max<std::size_t>(count, edges_.rbegin()->first + 1);
  std::vector<WindowGraph> windows;
  windows.reserve(count);
  for (std::size_t t = 0; t < count; ++t) {
    std::vector<Edge> edges;
    if (auto it = edges_.find(static_cast<WindowIndex>(t)); it != edges_.end()) {
      edges = std::move(it->second);
    }
    std::vector<EntityId> nodes;
    for (const Edge& e : edges) {
      nodes.push_back(e.src);
      nodes.push_back(e.dst);
    }
    std::sort(nodes.begin(), nodes.end());
    nodes.erase(std::unique(nodes.begin(), nodes.end()), nodes.end());
    for (EntityId node : nodes) {
      const EntityKind kind = vocabulary_.entity(node).kind;
      if (kind == EntityKind::kTypeNode) continue;
      edges.push_back(
          {node, vocabulary_.intern_relation(RelationDescriptor::simple(RelationKind::kHasType)),
           vocabulary_.type_node(kind)});
    }
    windows.emplace_back(static_cast<WindowIndex>(t), std::move(edges));
  }
  edges_.clear();
  return windows;
}

WindowGraph build_window_graph(WindowIndex t, std::span<const RawEvent> events,
                               Vocabulary& vocabulary, const IngestConfig& config,
                               const FlowTypeSet& retained_flows, IngestReport& report) {
  WindowGraphBuilder builder(vocabulary, config, retained_flows);
  for (const RawEvent& event : events) {
    if (assign_window(event.timestamp - config.time_origin, config.window_length) != t) {
      throw Error(ErrorCode::kInvalidArgument,
                  "event at " + std::to_string(event.timestamp) + " is outside window " +
                      std::to_string(t));
    }
    builder.add(event, report);
  }
  auto windows = builder.finish(t + 1);
  return std::move(windows[t]);
}

// ---------------------------------------------------------------------------
// Labels

bool LabelAssignment::is_malicious(WindowIndex window, const Edge& edge) const {
  return std::binary_search(malicious.begin(), malicious.end(), std::make_pair(window, edge));
}

LabelAssignment attach_labels(std::span<const WindowGraph> windows,
                              std::span<const LabelRecord> records, const IngestConfig& config,
                              const Vocabulary& vocabulary) {
  std::unordered_map<WindowIndex, const WindowGraph*> by_index;
  for (const WindowGraph& g : windows) by_index.emplace(g.index(), &g);

  LabelAssignment out;
  for (const LabelRecord& record : records) {
    const std::int64_t shifted = record.timestamp - config.time_origin;
    const auto src = vocabulary.find_entity(record.src_host);
    const auto dst = vocabulary.find_entity(record.dst_host);
    auto it = shifted >= 0 ? by_index.find(assign_window(shifted, config.window_length))
                           : by_index.end();
    if (!src || !dst || it == by_index.end()) {
      out.unmatched.push_back(record);
      continue;
    }
    const WindowGraph& graph = *it->second;
    auto edges = graph.edges();
    auto first = std::lower_bound(edges.begin(), edges.end(), Edge{*src, RelationId{0}, EntityId{0}});
    bool matched = false;
    for (auto e = first; e != edges.end() && e->src == *src; ++e) {
      if (e->dst != *dst) continue;
      if (!config.scoreable(vocabulary.relation(e->rel).descriptor)) continue;
      out.malicious.emplace_back(graph.index(), *e);
      matched = true;
    }
    if (matched) {
      ++out.matched_records;
    } else {
      out.unmatched.push_back(record);
    }
  }
  std::sort(out.malicious.begin(), out.malicious.end());
  out.malicious.erase(std::unique(out.malicious.begin(), out.malicious.end()), out.malicious.end());
  return out;
}

}  // namespace lmd
