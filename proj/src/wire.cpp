#include "lmd/wire.hpp"

#include <cmath>
#include <cstdio>

#include <json.hpp>

#include "lmd/error.hpp"

namespace lmd::wire {

namespace {

using Json = nlohmann::ordered_json;

std::string_view direction_name(Direction d) { return d == Direction::kTail ? "tail" : "head"; }

[[noreturn]] void bad_request(const std::string& why) {
  throw Error(ErrorCode::kInputError, "bad request: " + why);
}

[[noreturn]] void bad_response(const std::string& why) {
  throw Error(ErrorCode::kScorerOutputInvalid, "bad response: " + why);
}

std::uint32_t id_value(const Json& j, const char* what) {
  if (!j.is_number_unsigned() || j.get<std::uint64_t>() > UINT32_MAX) {
    bad_request(std::string(what) + " must be a non-negative 32-bit integer");
  }
  return j.get<std::uint32_t>();
}

const Json& member(const Json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) bad_request(std::string("missing \"") + key + "\"");
  return *it;
}

std::vector<std::uint32_t> id_list(const Json& j, const char* what) {
  if (!j.is_array()) bad_request(std::string(what) + " must be an array");
  std::vector<std::uint32_t> out;
  out.reserve(j.size());
  for (const Json& v : j) out.push_back(id_value(v, what));
  return out;
}

std::string string_member(const Json& j, const char* key) {
  const Json& v = member(j, key);
  if (!v.is_string()) bad_request(std::string("\"") + key + "\" must be a string");
  return v.get<std::string>();
}

}  // namespace

std::string context_id(const ContextGraph& context) {
  char buf[21];
  std::snprintf(buf, sizeof buf, "ctx-%016llx",
                static_cast<unsigned long long>(context.content_hash()));
  return buf;
}

SetContext make_set_context(const ContextGraph& context) {
  SetContext m;
  m.context_id = context_id(context);
  for (EntityId n : context.nodes()) m.nodes.push_back(raw(n));
  for (const Edge& e : context.edges()) m.edges.push_back({raw(e.src), raw(e.rel), raw(e.dst)});
  for (RelationId r : context.relations()) m.relations.push_back(raw(r));
  return m;
}

ContextGraph to_context(const SetContext& message) {
  std::vector<EntityId> nodes;
  for (auto n : message.nodes) nodes.push_back(EntityId{n});
  std::vector<Edge> edges;
  for (const auto& e : message.edges) edges.push_back({EntityId{e[0]}, RelationId{e[1]}, EntityId{e[2]}});
  std::vector<RelationId> relations;
  for (auto r : message.relations) relations.push_back(RelationId{r});
  return ContextGraph::from_parts(std::move(nodes), std::move(edges), std::move(relations), {});
}

std::string serialize(const Request& request) {
  Json j;
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, SetContext>) {
          j["op"] = "set_context";
          j["nodes"] = m.nodes;
          j["edges"] = Json::array();
          for (const auto& e : m.edges) j["edges"].push_back({e[0], e[1], e[2]});
          j["relations"] = m.relations;
          j["context_id"] = m.context_id;
        } else if constexpr (std::is_same_v<T, ScoreBatch>) {
          j["op"] = "score_batch";
          j["context_id"] = m.context_id;
          j["queries"] = Json::array();
          for (const auto& q : m.queries) {
            Json item;
            item["head"] = raw(q.anchor);
            item["rel"] = raw(q.rel);
            item["direction"] = direction_name(q.direction);
            j["queries"].push_back(std::move(item));
          }
        } else if constexpr (std::is_same_v<T, Ping>) {
          j["op"] = "ping";
        } else {
          j["op"] = "shutdown";
        }
      },
      request);
  return j.dump();
}

std::string serialize(const Response& response) {
  Json j;
  j["ok"] = response.ok;
  if (!response.ok) {
    j["error"] = response.error;
    return j.dump();
  }
  if (response.model) j["model"] = *response.model;
  if (response.context_id) j["context_id"] = *response.context_id;
  if (response.node_count) j["node_count"] = *response.node_count;
  if (response.scores) j["scores"] = *response.scores;
  return j.dump();
}

Request parse_request(std::string_view line) {
  Json j = Json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) bad_request("not a JSON object");
  const std::string op = string_member(j, "op");
  if (op == "ping") return Ping{};
  if (op == "shutdown") return Shutdown{};
  if (op == "set_context") {
    SetContext m;
    m.context_id = string_member(j, "context_id");
    m.nodes = id_list(member(j, "nodes"), "nodes");
    m.relations = id_list(member(j, "relations"), "relations");
    const Json& edges = member(j, "edges");
    if (!edges.is_array()) bad_request("edges must be an array");
    for (const Json& e : edges) {
      if (!e.is_array() || e.size() != 3) bad_request("edge must be [src, rel, dst]");
      m.edges.push_back({id_value(e[0], "src"), id_value(e[1], "rel"), id_value(e[2], "dst")});
    }
    return m;
  }
  if (op == "score_batch") {
    ScoreBatch m;
    m.context_id = string_member(j, "context_id");
    const Json& queries = member(j, "queries");
    if (!queries.is_array()) bad_request("queries must be an array");
    for (const Json& q : queries) {
      if (!q.is_object()) bad_request("query must be an object");
      ScoreQuery query;
      query.anchor = EntityId{id_value(member(q, "head"), "head")};
      query.rel = RelationId{id_value(member(q, "rel"), "rel")};
      const std::string direction = string_member(q, "direction");
      if (direction == "tail") {
        query.direction = Direction::kTail;
      } else if (direction == "head") {
        query.direction = Direction::kHead;
      } else {
        bad_request("direction must be \"tail\" or \"head\"");
      }
      m.queries.push_back(query);
    }
    return m;
  }
  bad_request("unknown op \"" + op + "\"");
}

Response parse_response(std::string_view line) {
  Json j = Json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) bad_response("not a JSON object");
  auto ok = j.find("ok");
  if (ok == j.end() || !ok->is_boolean()) bad_response("missing boolean \"ok\"");
  Response r;
  r.ok = ok->get<bool>();
  if (!r.ok) {
    auto e = j.find("error");
    r.error = (e != j.end() && e->is_string()) ? e->get<std::string>() : "unspecified error";
    return r;
  }
  if (auto m = j.find("model"); m != j.end()) {
    if (!m->is_string()) bad_response("\"model\" must be a string");
    r.model = m->get<std::string>();
  }
  if (auto c = j.find("context_id"); c != j.end()) {
    if (!c->is_string()) bad_response("\"context_id\" must be a string");
    r.context_id = c->get<std::string>();
  }
  if (auto n = j.find("node_count"); n != j.end()) {
    if (!n->is_number_unsigned()) bad_response("\"node_count\" must be a non-negative integer");
    r.node_count = n->get<std::uint64_t>();
  }
  if (auto s = j.find("scores"); s != j.end()) {
    if (!s->is_array()) bad_response("\"scores\" must be an array of arrays");
    ScoreMatrix rows;
    rows.reserve(s->size());
    for (const Json& row : *s) {
      if (!row.is_array()) bad_response("\"scores\" must be an array of arrays");
      std::vector<double> values;
      values.reserve(row.size());
      for (const Json& v : row) {
        if (!v.is_number()) bad_response("score entry is not a number");
        const double x = v.get<double>();
        if (!std::isfinite(x)) bad_response("score entry is not finite");
        values.push_back(x);
      }
      rows.push_back(std::move(values));
    }
    r.scores = std::move(rows);
  }
  return r;
}

}  // namespace lmd::wire
