#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "motifgpl/error.hpp"
#include "motifgpl/graph.hpp"

namespace motifgpl {

struct SegregationConfig {
  int c = 3;
  double quantile_split = 0.5;
};

/// Deviation of a socioeconomic distribution from uniform:
/// S = c / (2(c-1)) * sum_k |tau_k - 1/c|, in [0, 1].
inline double segregation_index(std::span<const double> tau, int c) {
  if (c < 2) throw ValidationError("segregation index needs c >= 2, got " + std::to_string(c));
  if (tau.size() != static_cast<std::size_t>(c))
    throw ValidationError("tau has " + std::to_string(tau.size()) + " entries, expected " +
                          std::to_string(c));
  double sum = 0.0;
  for (double t : tau) {
    if (!(t >= 0.0)) throw ValidationError("tau has a negative or non-finite entry");
    sum += t;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw ValidationError("tau does not sum to 1");
  const double uniform = 1.0 / c;
  double dev = 0.0;
  for (double t : tau) dev += std::abs(t - uniform);
  const double s = static_cast<double>(c) / (2.0 * (c - 1)) * dev;
  return std::clamp(s, 0.0, 1.0);
}

/// Two-class split at the `split` quantile: the round(split * n) lowest
/// scores get label 0, the rest 1. Ties go to the lower class in index order.
inline std::vector<int> label_by_quantile(std::span<const double> scores, double split) {
  if (!(split > 0.0 && split < 1.0)) throw ValidationError("quantile split must lie in (0,1)");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  const auto zeros = static_cast<std::size_t>(std::floor(split * static_cast<double>(n) + 0.5));
  std::vector<int> labels(n, 1);
  for (std::size_t r = 0; r < zeros && r < n; ++r) labels[order[r]] = 0;
  return labels;
}

enum class MoranWeights { binary, row_normalized };

/// Global Moran's I of `values` under the graph's adjacency weights.
inline double morans_i(const Graph& g, std::span<const double> values,
                       MoranWeights weighting = MoranWeights::binary) {
  const std::size_t n = g.node_count();
  if (values.size() != n) throw ValidationError("Moran's I: value count differs from node count");
  if (g.edge_count() == 0) throw UndefinedError("Moran's I undefined on an edgeless graph");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double denom = 0.0;
  for (double x : values) denom += (x - mean) * (x - mean);
  if (!(denom > 1e-300)) throw UndefinedError("Moran's I undefined for zero-variance values");

  double total_weight = 0.0;
  double cross = 0.0;
  for (NodeId i = 0; i < n; ++i) {
    const auto nbrs = g.neighbors(i);
    if (nbrs.empty()) continue;
    const double w = weighting == MoranWeights::binary ? 1.0 : 1.0 / static_cast<double>(nbrs.size());
    double acc = 0.0;
    for (const Neighbor& nb : nbrs) acc += values[nb.node] - mean;
    cross += w * (values[i] - mean) * acc;
    total_weight += w * static_cast<double>(nbrs.size());
  }
  return (static_cast<double>(n) / total_weight) * cross / denom;
}

inline double morans_i(const UrbanGraph& g, View which, std::span<const double> values,
                       MoranWeights weighting = MoranWeights::binary) {
  return morans_i(g.layer(which), values, weighting);
}

}  // namespace motifgpl
