#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "motifgpl/error.hpp"
#include "motifgpl/segregation.hpp"

namespace motifgpl {

/// Per-node attributes: feature matrix, socioeconomic distributions, and the
/// segregation scores / class labels derived from them.
struct NodeTable {
  Eigen::MatrixXd features;  // n x d_in
  Eigen::MatrixXd socio;     // n x c, probability rows
  std::vector<double> seg_score;
  std::vector<int> seg_label;  // 0 = low, 1 = high

  std::size_t node_count() const { return static_cast<std::size_t>(features.rows()); }
  std::size_t feature_dim() const { return static_cast<std::size_t>(features.cols()); }
  std::size_t socio_dim() const { return static_cast<std::size_t>(socio.cols()); }

  /// Validates socio rows and derives scores and quantile labels.
  static NodeTable build(Eigen::MatrixXd features, Eigen::MatrixXd socio, double split = 0.5) {
    if (features.rows() != socio.rows())
      throw ValidationError("feature and socio matrices disagree on node count");
    if (socio.cols() < 2) throw ValidationError("socio distribution needs at least 2 columns");
    NodeTable t;
    const auto n = features.rows();
    t.seg_score.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      double sum = 0.0;
      for (Eigen::Index k = 0; k < socio.cols(); ++k) {
        if (!(socio(i, k) >= 0.0))
          throw ValidationError("node " + std::to_string(i) + ": tau has a negative entry");
        sum += socio(i, k);
      }
      if (std::abs(sum - 1.0) > 1e-9)
        throw ValidationError("node " + std::to_string(i) + ": tau sums to " + std::to_string(sum) +
                              ", expected 1");
      std::vector<double> row(static_cast<std::size_t>(socio.cols()));
      for (Eigen::Index k = 0; k < socio.cols(); ++k) row[static_cast<std::size_t>(k)] = socio(i, k);
      t.seg_score[static_cast<std::size_t>(i)] = segregation_index(row, static_cast<int>(socio.cols()));
    }
    t.seg_label = label_by_quantile(t.seg_score, split);
    t.features = std::move(features);
    t.socio = std::move(socio);
    return t;
  }

  friend bool operator==(const NodeTable& a, const NodeTable& b) {
    return a.features == b.features && a.socio == b.socio && a.seg_score == b.seg_score &&
           a.seg_label == b.seg_label;
  }
};

}  // namespace motifgpl
