#include "lmd/refine.hpp"

#include <algorithm>
#include <limits>
#include <unordered_map>

#include "lmd/error.hpp"

namespace lmd {

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

struct TopTwo {
  double best = 0.0;
  std::size_t best_edge = kNone;
  double second = 0.0;
  std::size_t second_edge = kNone;

  void offer(double score, std::size_t edge) {
    if (best_edge == kNone || score > best) {
      second = best;
      second_edge = best_edge;
      best = score;
      best_edge = edge;
    } else if (second_edge == kNone || score > second) {
      second = score;
      second_edge = edge;
    }
  }

  // Largest incident score other than `edge`'s own.
  bool max_excluding(std::size_t edge, double& out) const {
    if (best_edge != edge && best_edge != kNone) {
      out = best;
      return true;
    }
    if (best_edge == edge && second_edge != kNone) {
      out = second;
      return true;
    }
    return false;
  }
};

}  // namespace

Refinement refine_scores(std::span<const Edge> edges, std::span<const double> scores) {
  if (edges.size() != scores.size()) {
    throw Error(ErrorCode::kInvalidArgument, "edge and score counts differ");
  }
  std::unordered_map<EntityId, TopTwo> incident;
  incident.reserve(edges.size() * 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    incident[edges[i].src].offer(scores[i], i);
    if (edges[i].dst != edges[i].src) incident[edges[i].dst].offer(scores[i], i);
  }

  Refinement out;
  out.scores.assign(scores.begin(), scores.end());
  out.flags.assign(scores.size(), 0);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    double s_max = 0.0;
    bool any = false;
    for (EntityId node : {edges[i].src, edges[i].dst}) {
      double m;
      if (incident.at(node).max_excluding(i, m)) {
        s_max = any ? std::max(s_max, m) : m;
        any = true;
      }
    }
    if (!any) out.flags[i] |= refine_flag::kIsolated;
    if (scores[i] > s_max) {
      out.scores[i] = s_max;
      out.flags[i] |= refine_flag::kClamped;
    }
  }
  return out;
}

void refine_window(std::span<ScoredEdge> window) {
  std::vector<std::size_t> index;
  std::vector<Edge> edges;
  std::vector<double> scores;
  for (std::size_t i = 0; i < window.size(); ++i) {
    if (!window[i].s_combined) continue;
    index.push_back(i);
    edges.push_back(window[i].edge);
    scores.push_back(*window[i].s_combined);
  }
  const Refinement r = refine_scores(edges, scores);
  for (std::size_t k = 0; k < index.size(); ++k) {
    window[index[k]].s_refined = r.scores[k];
    window[index[k]].refine_flags = r.flags[k];
  }
}

}  // namespace lmd
