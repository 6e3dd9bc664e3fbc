#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "motifgpl/error.hpp"
#include "motifgpl/graph.hpp"
#include "motifgpl/local_encoder.hpp"
#include "motifgpl/proto_model.hpp"
#include "motifgpl/rng.hpp"
#include "motifgpl/walks.hpp"

namespace motifgpl {

struct WalkSettings {
  std::size_t walks = 8;
  std::size_t length = 8;
};

/// Fresh walk bundles for a set of roots, one child rng stream per root.
inline std::vector<WalkBundle> sample_bundles(const Graph& g, std::span<const NodeId> roots, const WalkSettings& ws,
                                              const Rng& rng) {
  std::vector<WalkBundle> out;
  out.reserve(roots.size());
  for (NodeId r : roots) {
    Rng child = rng.split(r);
    out.push_back(random_walks(g, r, ws.walks, ws.length, child));
  }
  return out;
}

struct ProjectedPrototype {
  int class_id = 0;
  NodeId root = 0;
  double distance = 0.0;
  WalkBundle bundle;
};

struct ViewProjection {
  std::vector<ProjectedPrototype> prototypes;
  /// Every candidate examined this round (reused as encoding-loss candidates).
  std::vector<NodeId> candidate_nodes;
  std::vector<WalkBundle> candidate_bundles;
  std::vector<RowVec> candidate_codes;
};

/// Replaces every prototype of one view by the encoding of the closest local
/// structure among the candidate nodes of its class, recording the winning
/// root. Ties go to the earlier candidate.
inline ViewProjection project_view(PrototypeView& view, const Graph& g, const Mat& x, std::span<const NodeId> candidates,
                                   std::span<const int> labels, const WalkSettings& ws, const Rng& rng) {
  ViewProjection res;
  res.candidate_nodes.assign(candidates.begin(), candidates.end());
  res.candidate_bundles = sample_bundles(g, candidates, ws, rng);
  const auto inputs = LocalEncoderInputs::compute(view.local, x);
  for (const auto& b : res.candidate_bundles) res.candidate_codes.push_back(encode_local(b, view.local, inputs));

  auto& protos = view.protos;
  for (std::size_t j = 0; j < protos.size(); ++j) {
    const int cls = protos.class_of[j];
    std::int64_t best = -1;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (labels[candidates[c]] != cls) continue;
      const double d = (res.candidate_codes[c] - protos.p.row(static_cast<Eigen::Index>(j))).norm();
      if (d < best_d) best = static_cast<std::int64_t>(c), best_d = d;
    }
    if (best < 0)
      throw UndefinedError("prototype projection: class " + std::to_string(cls) + " has no candidate nodes");
    const auto b = static_cast<std::size_t>(best);
    res.prototypes.push_back({cls, candidates[b], best_d, res.candidate_bundles[b]});
  }
  for (std::size_t j = 0; j < protos.size(); ++j) {
    const auto& pp = res.prototypes[j];
    const auto it = std::find(candidates.begin(), candidates.end(), pp.root);
    protos.p.row(static_cast<Eigen::Index>(j)) = res.candidate_codes[static_cast<std::size_t>(it - candidates.begin())];
    protos.roots[j] = pp.root;
    protos.bundles[j] = pp.bundle;
  }
  return res;
}

/// Projection of both prototype sets: spatial prototypes onto spatial walks,
/// OD prototypes onto OD walks.
inline std::array<ViewProjection, 2> project_prototypes(PrototypeModel& m, const UrbanGraph& g, const Mat& x,
                                                       std::span<const NodeId> candidates, std::span<const int> labels,
                                                       const WalkSettings& ws, const Rng& rng) {
  std::array<ViewProjection, 2> out;
  for (View v : kViews) {
    const auto k = view_index(v);
    out[k] = project_view(m.views[k], g.layer(v), x, candidates, labels, ws, rng.split(k));
  }
  return out;
}

}  // namespace motifgpl
