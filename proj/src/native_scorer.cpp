#include "lmd/native_scorer.hpp"

#include <algorithm>

#include "lmd/error.hpp"

namespace lmd {

void NativeScorer::set_context(std::shared_ptr<const ContextGraph> context) {
  if (!context) throw Error(ErrorCode::kInvalidArgument, "null context");
  if (context_ && context->content_hash() == hash_ &&
      context->node_count() == context_->node_count() &&
      context->edge_count() == context_->edge_count()) {
    context_ = std::move(context);
    return;
  }
  context_ = std::move(context);
  hash_ = context_->content_hash();
  ++rebuilds_;

  neighbors_.assign(context_->node_count(), {});
  out_.clear();
  in_.clear();
  for (const Edge& e : context_->edges()) {
    const auto u = static_cast<std::uint32_t>(*context_->node_position(e.src));
    const auto v = static_cast<std::uint32_t>(*context_->node_position(e.dst));
    neighbors_[u].push_back(v);
    neighbors_[v].push_back(u);
    out_[{u, e.rel}].push_back(v);
    in_[{v, e.rel}].push_back(u);
  }
  for (auto& list : neighbors_) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
}

std::vector<double> NativeScorer::row(const ScoreQuery& query) const {
  const auto anchor = context_->node_position(query.anchor);
  if (!anchor) {
    throw Error(ErrorCode::kInvalidArgument,
                "query anchor " + std::to_string(raw(query.anchor)) + " is not in the context");
  }
  // |N(a) ∩ N(w)| for every w: count two-step paths a - n - w.
  std::vector<double> out(context_->node_count(), 0.0);
  for (std::uint32_t n : neighbors_[*anchor]) {
    for (std::uint32_t w : neighbors_[n]) out[w] += 1.0;
  }
  const auto& members = query.direction == Direction::kTail ? out_ : in_;
  const auto it = members.find({static_cast<std::uint32_t>(*anchor), query.rel});
  if (it != members.end()) {
    for (std::uint32_t w : it->second) out[w] += 2.0;
  }
  return out;
}

ScoreMatrix NativeScorer::score_batch(std::span<const ScoreQuery> queries) {
  if (!context_) throw Error(ErrorCode::kInvalidArgument, "no context set");
  ScoreMatrix rows;
  rows.reserve(queries.size());
  for (const ScoreQuery& q : queries) rows.push_back(row(q));
  return rows;
}

}  // namespace lmd
