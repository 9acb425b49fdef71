#include "lmd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <tuple>

#include "lmd/error.hpp"

namespace lmd {

namespace {

void check_sizes(std::span<const double> scores, std::span<const Label> labels) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorCode::kInvalidArgument, "score and label counts differ");
  }
}

// Positions ordered by score descending, input position ascending.
std::vector<std::size_t> ranking(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

auto canonical_key(const RankedEdge& e) { return std::tie(e.window, e.edge); }

}  // namespace

std::string_view to_string(ScoreKind kind) {
  return kind == ScoreKind::kRefined ? "refined" : "combined";
}

std::vector<RankedEdge> ranked_edges(std::span<const ScoredEdge> scored, ScoreKind kind) {
  std::vector<RankedEdge> out;
  for (const ScoredEdge& s : scored) {
    const auto& value = kind == ScoreKind::kRefined ? s.s_refined : s.s_combined;
    if (!value) continue;
    out.push_back({s.window, s.edge, *value, s.label});
  }
  std::sort(out.begin(), out.end(), [](const RankedEdge& a, const RankedEdge& b) {
    return canonical_key(a) < canonical_key(b);
  });
  return out;
}

double auc(std::span<const double> scores, std::span<const Label> labels) {
  check_sizes(scores, labels);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of (1-based, tie-averaged) ranks of the positives, kept doubled so
  // every tie group's average rank stays an integer.
  std::uint64_t doubled_rank_sum = 0;
  std::uint64_t positives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t doubled_average = (i + 1) + j;  // 2 * (first + last) / 2
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == Label::kMalicious) {
        doubled_rank_sum += doubled_average;
        ++positives;
      }
    }
    i = j;
  }
  const std::uint64_t negatives = scores.size() - positives;
  if (positives == 0 || negatives == 0) {
    throw Error(ErrorCode::kDegenerateLabels, "AUC needs both positive and negative labels");
  }
  const double u = static_cast<double>(doubled_rank_sum - positives * (positives + 1)) / 2.0;
  return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

double average_precision(std::span<const double> scores, std::span<const Label> labels) {
  check_sizes(scores, labels);
  const auto total = static_cast<std::size_t>(
      std::count(labels.begin(), labels.end(), Label::kMalicious));
  if (total == 0) throw Error(ErrorCode::kDegenerateLabels, "AP needs at least one positive");
  double ap = 0.0;
  std::size_t hits = 0;
  const auto order = ranking(scores);
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] != Label::kMalicious) continue;
    ++hits;
    ap += static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  return ap / static_cast<double>(total);
}

double recall_at_budget(std::span<const RankedEdge> edges, std::size_t budget) {
  if (budget == 0) throw Error(ErrorCode::kInvalidArgument, "budget must be positive");
  std::size_t malicious = 0;
  std::size_t found = 0;
  std::map<WindowIndex, std::vector<std::size_t>> by_window;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    by_window[edges[i].window].push_back(i);
    if (edges[i].label == Label::kMalicious) ++malicious;
  }
  if (malicious == 0) {
    throw Error(ErrorCode::kDegenerateLabels, "recall needs at least one malicious edge");
  }
  for (auto& [window, members] : by_window) {
    const std::size_t take = std::min(budget, members.size());
    std::partial_sort(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take),
                      members.end(), [&](std::size_t a, std::size_t b) {
                        if (edges[a].score != edges[b].score) return edges[a].score > edges[b].score;
                        return a < b;
                      });
    for (std::size_t k = 0; k < take; ++k) {
      if (edges[members[k]].label == Label::kMalicious) ++found;
    }
  }
  return static_cast<double>(found) / static_cast<double>(malicious);
}

std::vector<RankedEdge> deduplicate_malicious(std::span<const RankedEdge> edges) {
  std::map<Edge, std::size_t> keep;  // edge -> index of the kept occurrence
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i].label != Label::kMalicious) continue;
    auto [it, inserted] = keep.try_emplace(edges[i].edge, i);
    if (inserted) continue;
    const RankedEdge& current = edges[it->second];
    if (edges[i].score > current.score ||
        (edges[i].score == current.score && edges[i].window < current.window)) {
      it->second = i;
    }
  }
  std::vector<RankedEdge> out;
  out.reserve(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    if (edges[i].label == Label::kMalicious && keep.at(edges[i].edge) != i) continue;
    out.push_back(edges[i]);
  }
  return out;
}

double nearest_rank(std::span<const double> sorted, std::uint32_t per_mille) {
  if (sorted.empty()) throw Error(ErrorCode::kInvalidArgument, "percentile of an empty set");
  const std::uint64_t n = sorted.size();
  std::uint64_t rank = (n * per_mille + 999) / 1000;
  rank = std::clamp<std::uint64_t>(rank, 1, n);
  return sorted[rank - 1];
}

std::vector<PercentileRow> percentile_series(std::span<const RankedEdge> edges,
                                             std::size_t window_count) {
  std::vector<std::vector<double>> values(window_count);
  for (const RankedEdge& e : edges) {
    if (e.window >= values.size()) values.resize(e.window + 1);
    values[e.window].push_back(e.score);
  }
  std::vector<PercentileRow> rows(values.size());
  for (std::size_t t = 0; t < values.size(); ++t) {
    auto& v = values[t];
    rows[t].window = static_cast<WindowIndex>(t);
    rows[t].count = v.size();
    if (v.empty()) continue;
    std::sort(v.begin(), v.end());
    rows[t].p90 = nearest_rank(v, kPercentileLevels[0]);
    rows[t].p99 = nearest_rank(v, kPercentileLevels[1]);
    rows[t].p999 = nearest_rank(v, kPercentileLevels[2]);
  }
  return rows;
}

EvaluationReport evaluate(std::span<const RankedEdge> edges, std::span<const std::size_t> budgets,
                          ScoreKind kind, bool deduplicate) {
  std::vector<RankedEdge> kept;
  if (deduplicate) {
    kept = deduplicate_malicious(edges);
  } else {
    kept.assign(edges.begin(), edges.end());
  }
  EvaluationReport report;
  report.score_kind = kind;
  report.deduplicated = deduplicate;
  std::vector<double> scores;
  std::vector<Label> labels;
  std::set<WindowIndex> windows;
  for (const RankedEdge& e : kept) {
    scores.push_back(e.score);
    labels.push_back(e.label);
    windows.insert(e.window);
    (e.label == Label::kMalicious ? report.positives : report.negatives) += 1;
  }
  report.windows = windows.size();
  report.auc = auc(scores, labels);
  report.ap = average_precision(scores, labels);
  for (std::size_t b : budgets) report.recall[b] = recall_at_budget(kept, b);
  return report;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd out;
  out.count = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  double squares = 0.0;
  for (double v : values) squares += (v - out.mean) * (v - out.mean);
  out.stddev = std::sqrt(squares / static_cast<double>(values.size()));
  return out;
}

}  // namespace lmd
