#include "lmd/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lmd/error.hpp"

namespace lmd {

void RelationStats::observe(const WindowGraph& graph) {
  for (const auto& [rel, count] : graph.theta()) {
    if (raw(rel) >= sum_.size()) {
      sum_.resize(raw(rel) + 1, 0);
      sum_squares_.resize(raw(rel) + 1, 0);
    }
    sum_[raw(rel)] += count;
    sum_squares_[raw(rel)] += static_cast<std::uint64_t>(count) * count;
  }
  ++windows_;
}

double RelationStats::mean(RelationId rel) const {
  if (windows_ == 0 || raw(rel) >= sum_.size()) return 0.0;
  return static_cast<double>(sum_[raw(rel)]) / windows_;
}

double RelationStats::stddev(RelationId rel) const {
  if (windows_ == 0 || raw(rel) >= sum_.size()) return 0.0;
  // T^2 * variance = T * sum(x^2) - (sum x)^2, evaluated exactly.
  using Wide = unsigned __int128;
  const Wide scaled = static_cast<Wide>(windows_) * sum_squares_[raw(rel)];
  const Wide square = static_cast<Wide>(sum_[raw(rel)]) * sum_[raw(rel)];
  if (scaled <= square) return 0.0;
  const double t = windows_;
  return std::sqrt(static_cast<double>(scaled - square) / (t * t));
}

double RelationStats::standardize(RelationId rel, std::uint32_t count) const {
  const double sigma = stddev(rel);
  if (sigma == 0.0) return 0.0;
  return (static_cast<double>(count) - mean(rel)) / sigma;
}

double sim_nodes(const WindowGraph& a, const WindowGraph& b) {
  auto x = a.nodes();
  auto y = b.nodes();
  std::size_t common = 0;
  std::size_t i = 0, j = 0;
  while (i < x.size() && j < y.size()) {
    if (x[i] < y[j]) {
      ++i;
    } else if (y[j] < x[i]) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  const std::size_t total = x.size() + y.size() - common;
  if (total == 0) return 0.0;
  return static_cast<double>(common) / static_cast<double>(total);
}

double sim_relations(const WindowGraph& a, const WindowGraph& b, const RelationStats& stats) {
  auto x = a.theta();
  auto y = b.theta();
  double dot = 0.0, norm_a = 0.0, norm_b = 0.0;
  std::size_t i = 0, j = 0;
  while (i < x.size() || j < y.size()) {
    RelationId rel;
    std::uint32_t count_a = 0, count_b = 0;
    if (j == y.size() || (i < x.size() && x[i].first < y[j].first)) {
      rel = x[i].first;
      count_a = x[i++].second;
    } else if (i == x.size() || y[j].first < x[i].first) {
      rel = y[j].first;
      count_b = y[j++].second;
    } else {
      rel = x[i].first;
      count_a = x[i++].second;
      count_b = y[j++].second;
    }
    const double za = stats.standardize(rel, count_a);
    const double zb = stats.standardize(rel, count_b);
    dot += za * zb;
    norm_a += za * za;
    norm_b += zb * zb;
  }
  if (norm_a == 0.0 || norm_b == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(norm_a * norm_b), -1.0, 1.0);
}

double similarity(const WindowGraph& a, const WindowGraph& b, const RelationStats& stats) {
  return sim_nodes(a, b) + sim_relations(a, b, stats);
}

std::vector<WindowIndex> top_k_by_similarity(std::span<const double> similarity_by_ordinal,
                                             std::size_t k) {
  std::vector<WindowIndex> order(similarity_by_ordinal.size());
  std::iota(order.begin(), order.end(), WindowIndex{0});
  const auto better = [&](WindowIndex a, WindowIndex b) {
    if (similarity_by_ordinal[a] != similarity_by_ordinal[b]) {
      return similarity_by_ordinal[a] > similarity_by_ordinal[b];
    }
    return a > b;
  };
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    better);
  order.resize(k);
  return order;
}

RetrievalDecision select_context(const WindowGraph& current, std::span<const WindowGraph> past,
                                 std::size_t k, const RelationStats& stats) {
  RetrievalDecision decision;
  decision.window = current.index();
  decision.candidate_similarity.reserve(past.size());
  for (const WindowGraph& g : past) {
    decision.candidate_similarity.push_back(similarity(current, g, stats));
  }
  decision.selected = top_k_by_similarity(decision.candidate_similarity, k);
  for (WindowIndex w : decision.selected) {
    decision.selected_similarity.push_back(decision.candidate_similarity[w]);
  }
  return decision;
}

ContextPair ContextAssembler::assemble(WindowIndex t, const RetrievalDecision& decision) {
  if (t < merged_) {
    throw Error(ErrorCode::kInvalidArgument, "contexts must be assembled in window order");
  }
  if (t > store_.size()) {
    throw Error(ErrorCode::kInvalidArgument, "window " + std::to_string(t) + " not in store");
  }
  for (; merged_ < t; ++merged_) long_term_.merge(store_[merged_]);

  ContextPair out;
  out.warm_up = (t == 0);
  out.long_term = long_term_.snapshot();

  std::vector<const WindowGraph*> chosen;
  for (WindowIndex w : decision.selected) {
    if (w >= t) {
      throw Error(ErrorCode::kInvariantViolation,
                  "selected window " + std::to_string(w) + " is not in the past of " +
                      std::to_string(t));
    }
    chosen.push_back(&store_[w]);
  }
  out.short_term = chosen.empty()
                       ? std::make_shared<const ContextGraph>()
                       : std::make_shared<const ContextGraph>(
                             unite(std::span<const WindowGraph* const>(chosen)));
  return out;
}

}  // namespace lmd
