#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "lmd/graph.hpp"
#include "lmd/scoring.hpp"

// Newline-delimited JSON messages exchanged with an external scoring
// process. Every message is one compact JSON object on one line.
namespace lmd::wire {

struct SetContext {
  std::string context_id;
  std::vector<std::uint32_t> nodes;
  std::vector<std::array<std::uint32_t, 3>> edges;  // [src, rel, dst]
  std::vector<std::uint32_t> relations;

  bool operator==(const SetContext&) const = default;
};

struct ScoreBatch {
  std::string context_id;
  std::vector<ScoreQuery> queries;

  bool operator==(const ScoreBatch&) const = default;
};

struct Ping {
  bool operator==(const Ping&) const = default;
};

struct Shutdown {
  bool operator==(const Shutdown&) const = default;
};

using Request = std::variant<SetContext, ScoreBatch, Ping, Shutdown>;

/// Success or failure reply. Optional members are emitted only when set.
struct Response {
  bool ok = true;
  std::string error;                       // failures only
  std::optional<std::string> model;        // ping
  std::optional<std::string> context_id;   // set_context
  std::optional<std::uint64_t> node_count; // set_context
  std::optional<ScoreMatrix> scores;       // score_batch

  bool operator==(const Response&) const = default;
};

/// Error text a server returns for a score_batch naming a context it does
/// not hold; clients answer it by uploading the context again.
inline constexpr std::string_view kUnknownContext = "unknown-context";

/// "ctx-" followed by the 16 hex digits of the context's content hash.
std::string context_id(const ContextGraph& context);
SetContext make_set_context(const ContextGraph& context);
ContextGraph to_context(const SetContext& message);

/// Compact single-line JSON without the trailing newline.
std::string serialize(const Request& request);
std::string serialize(const Response& response);

/// Throws Error(kInputError) for anything that is not a well-formed request.
Request parse_request(std::string_view line);
/// Throws Error(kScorerOutputInvalid) for anything that is not a well-formed
/// response, including non-numeric or non-finite scores.
Response parse_response(std::string_view line);

}  // namespace lmd::wire
