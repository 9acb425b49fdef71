#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lmd/graph.hpp"
#include "lmd/scoring.hpp"

namespace lmd {

struct Refinement {
  std::vector<double> scores;
  std::vector<std::uint8_t> flags;  // refine_flag bits
};

/// Neighborhood clamp over the edges of one window. For each edge e,
/// s_max(e) is the largest original score among the other edges sharing an
/// endpoint with e (0 when there are none). Scores above s_max(e) drop to
/// s_max(e). All maxima are taken from the original scores, so the result
/// does not depend on edge order. Runs in O(|E|) using the two largest
/// incident scores per node.
Refinement refine_scores(std::span<const Edge> edges, std::span<const double> scores);

/// Applies refine_scores to the entries of `window` that have a combined
/// score; entries without one are left untouched.
void refine_window(std::span<ScoredEdge> window);

}  // namespace lmd
