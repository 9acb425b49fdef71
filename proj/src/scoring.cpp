#include "lmd/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "lmd/error.hpp"

namespace lmd {

namespace {

std::shared_ptr<const ContextGraph> borrow(const ContextGraph& graph) {
  return std::shared_ptr<const ContextGraph>(std::shared_ptr<const void>(), &graph);
}

// -log min(p_forward, p_backward) from the two log probabilities. Adding
// 0.0 folds a -0 result.
double term_score(double log_forward, double log_backward) {
  return std::max(-log_forward, -log_backward) + 0.0;
}

double fallback_score(const ContextGraph& context) {
  return std::log(static_cast<double>(context.node_count()));
}

void check_row(const std::vector<double>& row, const ContextGraph& context) {
  if (row.size() != context.node_count()) {
    throw Error(ErrorCode::kScorerOutputInvalid,
                "score row has " + std::to_string(row.size()) + " entries, context has " +
                    std::to_string(context.node_count()) + " nodes");
  }
}

// Model-evaluated component: -log min over the forward and backward queries.
double model_term(const Edge& e, const ContextGraph& context, Scorer& scorer) {
  const std::size_t u = *context.node_position(e.src);
  const std::size_t v = *context.node_position(e.dst);
  const auto forward = scorer.score_tails(e.src, e.rel);
  const auto backward = scorer.score_heads(e.dst, e.rel);
  check_row(forward, context);
  check_row(backward, context);
  return term_score(log_probability(forward, normalize_row(forward), v),
                    log_probability(backward, normalize_row(backward), u));
}

// Known-edge and endpoint rules for a relation that exists in the context.
double known_relation_score(const Edge& e, const ContextGraph& context, Scorer& scorer,
                            std::uint8_t& flags) {
  if (context.contains_edge(e)) return 0.0;
  if (!context.contains_node(e.src) || !context.contains_node(e.dst)) {
    flags |= side_flag::kEndpointAbsent;
    return fallback_score(context);
  }
  return model_term(e, context, scorer);
}

}  // namespace

// ---------------------------------------------------------------------------
// Scorer helpers

std::vector<double> Scorer::score_tails(EntityId head, RelationId rel) {
  const ScoreQuery query{head, rel, Direction::kTail};
  auto rows = score_batch(std::span<const ScoreQuery>(&query, 1));
  if (rows.size() != 1) throw Error(ErrorCode::kScorerOutputInvalid, "expected one row");
  return std::move(rows.front());
}

std::vector<double> Scorer::score_heads(EntityId tail, RelationId rel) {
  const ScoreQuery query{tail, rel, Direction::kHead};
  auto rows = score_batch(std::span<const ScoreQuery>(&query, 1));
  if (rows.size() != 1) throw Error(ErrorCode::kScorerOutputInvalid, "expected one row");
  return std::move(rows.front());
}

// ---------------------------------------------------------------------------
// Softmax

RowNormalizer normalize_row(std::span<const double> row) {
  if (row.empty()) throw Error(ErrorCode::kScorerOutputInvalid, "empty score row");
  RowNormalizer n;
  n.max = row[0];
  for (double g : row) {
    if (!std::isfinite(g)) throw Error(ErrorCode::kScorerOutputInvalid, "non-finite raw score");
    n.max = std::max(n.max, g);
  }
  double sum = 0.0;
  for (double g : row) sum += std::exp(g - n.max);
  n.log_sum = std::log(sum);
  return n;
}

double edge_probability(std::span<const double> row, std::size_t target) {
  if (target >= row.size()) throw Error(ErrorCode::kInvalidArgument, "target out of range");
  const RowNormalizer n = normalize_row(row);
  double sum = 0.0;
  for (double g : row) sum += std::exp(g - n.max);
  return std::exp(row[target] - n.max) / sum;
}

std::vector<double> softmax(std::span<const double> row) {
  const RowNormalizer n = normalize_row(row);
  std::vector<double> out(row.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    out[i] = std::exp(row[i] - n.max);
    sum += out[i];
  }
  for (double& p : out) p /= sum;
  return out;
}

// ---------------------------------------------------------------------------
// Single-edge path

SideScore anomaly_score(const Edge& edge, const ContextGraph& context, Scorer& scorer) {
  if (context.empty()) throw Error(ErrorCode::kWarmUp, "context graph is empty");
  SideScore out;
  if (context.contains_edge(edge)) {
    out.value = 0.0;
    out.flags = side_flag::kKnownEdge;
    return out;
  }
  if (!context.contains_relation(edge.rel)) {
    out.flags = side_flag::kUnknownRelation;
    double sum = 0.0;
    for (RelationId rel : context.relations()) {
      sum += known_relation_score(Edge{edge.src, rel, edge.dst}, context, scorer, out.flags);
    }
    out.value = sum / static_cast<double>(context.relations().size());
    return out;
  }
  out.value = known_relation_score(edge, context, scorer, out.flags);
  return out;
}

double combine(double s_short, double s_long) { return 0.5 * (s_short + s_long); }

// ---------------------------------------------------------------------------
// Batched path

namespace {

struct TermRef {
  std::size_t forward_query;
  std::size_t forward_slot;
  std::size_t backward_query;
  std::size_t backward_slot;
};

// One component of an edge's score: a fixed value or a model term.
struct Component {
  double fixed = 0.0;
  std::optional<std::size_t> term;
};

struct EdgePlan {
  std::vector<Component> components;
  bool average = false;
  std::uint8_t flags = 0;
};

class BatchPlanner {
 public:
  explicit BatchPlanner(const ContextGraph& context) : context_(context) {}

  EdgePlan plan(const Edge& edge) {
    EdgePlan p;
    if (context_.contains_edge(edge)) {
      p.flags = side_flag::kKnownEdge;
      p.components.push_back({0.0, std::nullopt});
      return p;
    }
    if (!context_.contains_relation(edge.rel)) {
      p.flags = side_flag::kUnknownRelation;
      p.average = true;
      for (RelationId rel : context_.relations()) {
        p.components.push_back(component(Edge{edge.src, rel, edge.dst}, p.flags));
      }
      return p;
    }
    p.components.push_back(component(edge, p.flags));
    return p;
  }

  std::vector<ScoreQuery> queries() const {
    std::vector<ScoreQuery> out(query_index_.size());
    for (const auto& [query, index] : query_index_) out[index] = query;
    return out;
  }

  std::span<const std::size_t> targets(std::size_t query) const { return targets_[query]; }
  const std::vector<TermRef>& terms() const { return terms_; }

 private:
  Component component(const Edge& e, std::uint8_t& flags) {
    if (context_.contains_edge(e)) return {0.0, std::nullopt};
    const auto u = context_.node_position(e.src);
    const auto v = context_.node_position(e.dst);
    if (!u || !v) {
      flags |= side_flag::kEndpointAbsent;
      return {fallback_score(context_), std::nullopt};
    }
    const auto [fq, fs] = request({e.src, e.rel, Direction::kTail}, *v);
    const auto [bq, bs] = request({e.dst, e.rel, Direction::kHead}, *u);
    terms_.push_back({fq, fs, bq, bs});
    return {0.0, terms_.size() - 1};
  }

  std::pair<std::size_t, std::size_t> request(const ScoreQuery& query, std::size_t target) {
    auto [it, inserted] = query_index_.try_emplace(query, targets_.size());
    if (inserted) targets_.emplace_back();
    auto& slots = targets_[it->second];
    slots.push_back(target);
    return {it->second, slots.size() - 1};
  }

  const ContextGraph& context_;
  std::map<ScoreQuery, std::size_t> query_index_;
  std::vector<std::vector<std::size_t>> targets_;
  std::vector<TermRef> terms_;
};

}  // namespace

std::vector<SideScore> score_side(std::span<const Edge> edges,
                                  std::shared_ptr<const ContextGraph> context, Scorer& scorer,
                                  const ScoringOptions& options) {
  if (!context || context->empty()) throw Error(ErrorCode::kWarmUp, "context graph is empty");
  scorer.set_context(context);

  BatchPlanner planner(*context);
  std::vector<EdgePlan> plans;
  plans.reserve(edges.size());
  for (const Edge& e : edges) plans.push_back(planner.plan(e));

  // Log probabilities per query, one per requested target slot.
  const std::vector<ScoreQuery> queries = planner.queries();
  std::vector<std::vector<double>> log_probs(queries.size());
  const std::size_t batch = std::max<std::size_t>(options.max_batch, 1);
  for (std::size_t begin = 0; begin < queries.size(); begin += batch) {
    const std::size_t end = std::min(queries.size(), begin + batch);
    const auto chunk = std::span<const ScoreQuery>(queries).subspan(begin, end - begin);
    ScoreMatrix rows = scorer.score_batch(chunk);
    if (rows.size() != chunk.size()) {
      throw Error(ErrorCode::kScorerOutputInvalid,
                  "scorer returned " + std::to_string(rows.size()) + " rows for " +
                      std::to_string(chunk.size()) + " queries");
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      check_row(rows[i], *context);
      const RowNormalizer n = normalize_row(rows[i]);
      auto& out = log_probs[begin + i];
      for (std::size_t target : planner.targets(begin + i)) {
        out.push_back(log_probability(rows[i], n, target));
      }
    }
  }

  std::vector<SideScore> scores(edges.size());
  for (std::size_t i = 0; i < plans.size(); ++i) {
    const EdgePlan& p = plans[i];
    double sum = 0.0;
    for (const Component& c : p.components) {
      double value = c.fixed;
      if (c.term) {
        const TermRef& t = planner.terms()[*c.term];
        value = term_score(log_probs[t.forward_query][t.forward_slot],
                           log_probs[t.backward_query][t.backward_slot]);
      }
      sum += value;
    }
    scores[i].flags = p.flags;
    scores[i].value = p.average ? sum / static_cast<double>(p.components.size()) : sum;
  }
  return scores;
}

RelationFilter make_relation_filter(const Vocabulary& vocabulary, ScoreablePredicate predicate) {
  return [&vocabulary, predicate](RelationId rel) {
    return predicate(vocabulary.relation(rel).descriptor);
  };
}

std::vector<ScoredEdge> warm_up_window(const WindowGraph& graph, const RelationFilter& scoreable) {
  std::vector<ScoredEdge> out;
  for (const Edge& e : graph.edges()) {
    if (!scoreable(e.rel)) continue;
    ScoredEdge s;
    s.window = graph.index();
    s.edge = e;
    s.short_flags = side_flag::kWarmUp;
    s.long_flags = side_flag::kWarmUp;
    out.push_back(s);
  }
  return out;
}

std::vector<ScoredEdge> score_window(const WindowGraph& graph,
                                     std::shared_ptr<const ContextGraph> short_term,
                                     std::shared_ptr<const ContextGraph> long_term,
                                     Scorer& scorer, const RelationFilter& scoreable,
                                     const ScoringOptions& options) {
  if (!long_term || long_term->empty()) {
    throw Error(ErrorCode::kWarmUp, "long-term context is empty", graph.index());
  }
  std::vector<Edge> edges;
  for (const Edge& e : graph.edges()) {
    if (scoreable(e.rel)) edges.push_back(e);
  }
  std::vector<ScoredEdge> out(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    out[i].window = graph.index();
    out[i].edge = edges[i];
  }
  if (edges.empty()) return out;

  try {
    if (short_term && !short_term->empty()) {
      const auto side = score_side(edges, short_term, scorer, options);
      for (std::size_t i = 0; i < edges.size(); ++i) {
        out[i].s_short = side[i].value;
        out[i].short_flags = side[i].flags;
      }
    } else {
      for (auto& s : out) s.short_flags = side_flag::kEmptyContext;
    }
    const auto side = score_side(edges, long_term, scorer, options);
    for (std::size_t i = 0; i < edges.size(); ++i) {
      out[i].s_long = side[i].value;
      out[i].long_flags = side[i].flags;
    }
  } catch (const Error& e) {
    throw e.with_window(graph.index());
  }

  for (auto& s : out) {
    s.s_combined = s.s_short ? combine(*s.s_short, *s.s_long) : *s.s_long;
  }
  return out;
}

std::vector<ScoredEdge> score_window(const WindowGraph& graph, const ContextGraph& short_term,
                                     const ContextGraph& long_term, Scorer& scorer,
                                     const RelationFilter& scoreable,
                                     const ScoringOptions& options) {
  return score_window(graph, borrow(short_term), borrow(long_term), scorer, scoreable, options);
}

}  // namespace lmd
