#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "motifgpl/error.hpp"
#include "motifgpl/graph.hpp"
#include "motifgpl/motif.hpp"
#include "motifgpl/rng.hpp"
#include "motifgpl/segregation.hpp"
#include "motifgpl/walks.hpp"

namespace motifgpl {

inline void check_probability(std::span<const double> p, const char* what) {
  double sum = 0.0;
  for (double v : p) {
    if (!(v > 0.0)) throw ValidationError(std::string(what) + ": entries must be strictly positive (smoothed)");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError(std::string(what) + ": does not sum to 1");
}

inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw ValidationError("kl_divergence: length mismatch");
  check_probability(p, "kl_divergence p");
  check_probability(q, "kl_divergence q");
  double kl = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) kl += p[k] * std::log(p[k] / q[k]);
  return std::max(kl, 0.0);
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) ab += a[k] * b[k], aa += a[k] * a[k], bb += b[k] * b[k];
  return aa > 0.0 && bb > 0.0 ? ab / std::sqrt(aa * bb) : 0.0;
}

enum class MatchRule { cosine, neg_kl };

struct MotifMatch {
  std::size_t index = 0;
  double similarity = 0.0;
  bool empty_input = false;  // node had no motif occurrences; matched as smoothed-uniform
};

inline double motif_similarity(std::span<const double> node, std::span<const double> entry, MatchRule rule) {
  return rule == MatchRule::cosine ? cosine_similarity(node, entry) : -kl_divergence(node, entry);
}

/// Library entry with the highest similarity; ties go to the lowest index.
/// `allowed`, when given, restricts the search.
inline MotifMatch match_motif(const MotifDistribution& node, std::span<const MotifDistribution> library,
                              MatchRule rule = MatchRule::cosine, std::span<const std::size_t> allowed = {}) {
  if (library.empty()) throw ValidationError("match_motif: empty library");
  MotifMatch m;
  m.empty_input = node.total() == 0;
  m.similarity = -std::numeric_limits<double>::infinity();
  bool found = false;
  const auto consider = [&](std::size_t k) {
    if (library[k].normalized.size() != node.normalized.size())
      throw ValidationError("match_motif: catalog size mismatch");
    const double s = motif_similarity(node.normalized, library[k].normalized, rule);
    if (!found || s > m.similarity) m.index = k, m.similarity = s, found = true;
  };
  if (allowed.empty())
    for (std::size_t k = 0; k < library.size(); ++k) consider(k);
  else
    for (std::size_t k : allowed) consider(k);
  return m;
}

/// Motif distribution of each prototype's projected fragment, with the class
/// and root node the prototype was projected onto.
struct PrototypeLibrary {
  std::vector<int> class_of;
  std::vector<NodeId> roots;
  std::vector<MotifDistribution> distributions;

  std::size_t size() const { return distributions.size(); }
};

enum class Scope { high, low, all, explicit_nodes };
enum class SymmetryRule { either, both };

struct ReconstructConfig {
  double alpha = 0.8;
  double beta = 0.3;
  Scope scope = Scope::high;
  std::vector<NodeId> scope_nodes;  // used when scope == explicit_nodes
  std::optional<NodeId> target;     // explicit A[tar] row instead of the per-node prototype root
  MatchRule rule = MatchRule::cosine;
  SymmetryRule symmetry = SymmetryRule::either;
  int low_class = 0;
  std::size_t walks = 8;
  std::size_t walk_length = 8;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("reconstruct: alpha must lie in [0,1]");
    if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("reconstruct: beta must lie in (0,1)");
    if (walks == 0 || walk_length == 0) throw ValidationError("reconstruct: walks and walk_length must be positive");
  }
};

inline Scope parse_scope(const std::string& s) {
  if (s == "high") return Scope::high;
  if (s == "low") return Scope::low;
  if (s == "all") return Scope::all;
  throw ValidationError("unknown scope '" + s + "' (expected high, low, all or a node file)");
}

/// One scoped node's blend: which prototype it matched, which row it moves toward and how far.
struct RowPlan {
  NodeId node = 0;
  std::size_t matched = 0;
  NodeId target = 0;
  std::optional<std::size_t> target_prototype;
  double kl = 0.0;
  double weight = 0.0;  // clamp(alpha * KL, 0, 1)
  bool empty_input = false;
  std::vector<Neighbor> blended;  // nonzero entries of the real-valued blended row
};

struct ReconstructionPlan {
  View view = View::spatial;
  std::vector<RowPlan> rows;
  std::size_t empty_inputs = 0;
};

struct ReconstructionReport {
  double alpha = 0.0;
  double beta = 0.0;
  double aep = 0.0;
  double rep = 0.0;
  double uep = 0.0;
  double morans_before = 0.0;
  double morans_after = 0.0;
  double morans_label_before = 0.0;
  double morans_label_after = 0.0;
  std::size_t added = 0;
  std::size_t removed = 0;
  std::vector<NodeId> changed_rows;
};

struct ReconstructionResult {
  UrbanGraph graph;
  ReconstructionReport report;
};

inline std::vector<NodeId> scoped_nodes(const ReconstructConfig& cfg, std::span<const int> labels) {
  std::vector<NodeId> out;
  switch (cfg.scope) {
    case Scope::explicit_nodes:
      out = cfg.scope_nodes;
      std::sort(out.begin(), out.end());
      out.erase(std::unique(out.begin(), out.end()), out.end());
      for (NodeId v : out)
        if (v >= labels.size()) throw ValidationError("reconstruct: scope node " + std::to_string(v) + " outside graph");
      return out;
    case Scope::all:
      for (NodeId i = 0; i < labels.size(); ++i) out.push_back(i);
      return out;
    case Scope::high:
    case Scope::low:
      for (NodeId i = 0; i < labels.size(); ++i)
        if ((labels[i] != cfg.low_class) == (cfg.scope == Scope::high)) out.push_back(i);
      return out;
  }
  return out;
}

/// Census of the walk fragment around one node.
inline MotifDistribution local_distribution(const Graph& g, NodeId node, std::size_t walks, std::size_t length,
                                            const Rng& rng, const MotifCatalog& catalog) {
  Rng child = rng.split(node);
  return census(bundle_to_subgraph(random_walks(g, node, walks, length, child)).graph, catalog);
}

/// Computes every scoped row's blend once; thresholding at different betas reuses it.
/// All KLs are taken against the original graph (single pass).
inline ReconstructionPlan plan_reconstruction(const UrbanGraph& g, View which, const PrototypeLibrary& lib,
                                              std::span<const int> labels, const ReconstructConfig& cfg,
                                              const MotifCatalog& catalog = MotifCatalog()) {
  cfg.validate();
  const Graph& layer = g.layer(which);
  if (labels.size() != layer.node_count()) throw ValidationError("reconstruct: labels do not match graph");
  if (lib.size() == 0) throw ValidationError("reconstruct: empty prototype library");
  if (cfg.target && *cfg.target >= layer.node_count())
    throw ValidationError("reconstruct: target node " + std::to_string(*cfg.target) + " outside graph");
  std::vector<std::size_t> low_protos;
  for (std::size_t k = 0; k < lib.size(); ++k)
    if (lib.class_of[k] == cfg.low_class) low_protos.push_back(k);
  if (!cfg.target && low_protos.empty())
    throw UndefinedError("reconstruct: no low-segregation prototype to take a target row from");

  ReconstructionPlan plan;
  plan.view = which;
  const Rng walk_rng(cfg.seed, 7);
  std::optional<MotifDistribution> explicit_target;
  if (cfg.target)
    explicit_target = local_distribution(layer, *cfg.target, cfg.walks, cfg.walk_length, walk_rng, catalog);

  for (NodeId i : scoped_nodes(cfg, labels)) {
    RowPlan row;
    row.node = i;
    const MotifDistribution dist = local_distribution(layer, i, cfg.walks, cfg.walk_length, walk_rng, catalog);
    const MotifMatch m = match_motif(dist, lib.distributions, cfg.rule);
    row.matched = m.index;
    row.empty_input = m.empty_input;
    plan.empty_inputs += m.empty_input;
    const MotifDistribution* target_dist = nullptr;
    if (cfg.target) {
      row.target = *cfg.target;
      target_dist = &*explicit_target;
    } else {
      const MotifMatch t = match_motif(dist, lib.distributions, cfg.rule, low_protos);
      row.target_prototype = t.index;
      row.target = lib.roots[t.index];
      target_dist = &lib.distributions[t.index];
    }
    row.kl = kl_divergence(lib.distributions[m.index].normalized, target_dist->normalized);
    row.weight = std::clamp(cfg.alpha * row.kl, 0.0, 1.0);

    // Sparse convex combination of the two 0/1 adjacency rows.
    const auto own = layer.neighbors(i);
    const auto tar = layer.neighbors(row.target);
    std::size_t a = 0, b = 0;
    while (a < own.size() || b < tar.size()) {
      NodeId j;
      double v = 0.0;
      if (b == tar.size() || (a < own.size() && own[a].node < tar[b].node)) {
        j = own[a].node, v = 1.0 - row.weight, ++a;
      } else if (a == own.size() || tar[b].node < own[a].node) {
        j = tar[b].node, v = row.weight, ++b;
      } else {
        j = own[a].node, v = 1.0, ++a, ++b;
      }
      if (j != i && v != 0.0) row.blended.push_back({j, v});
    }
    plan.rows.push_back(std::move(row));
  }
  return plan;
}

/// Thresholded rows of the whole matrix: scoped rows from the plan, the rest as in `layer`.
inline std::vector<std::vector<NodeId>> thresholded_rows(const Graph& layer, const ReconstructionPlan& plan,
                                                         double beta) {
  std::vector<std::vector<NodeId>> rows(layer.node_count());
  for (NodeId i = 0; i < layer.node_count(); ++i)
    for (const Neighbor& nb : layer.neighbors(i)) rows[i].push_back(nb.node);
  for (const RowPlan& r : plan.rows) {
    rows[r.node].clear();
    for (const Neighbor& nb : r.blended)
      if (nb.weight > beta) rows[r.node].push_back(nb.node);
  }
  return rows;
}

inline double safe_morans(const Graph& g, std::span<const double> values) {
  try {
    return morans_i(g, values);
  } catch (const UndefinedError&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

/// Applies a plan at threshold `beta`, restores symmetry and fills the report.
/// Surviving edges keep their weight; created edges get weight 1.
inline ReconstructionResult apply_plan(const UrbanGraph& g, const ReconstructionPlan& plan, double alpha, double beta,
                                       SymmetryRule symmetry, std::span<const double> scores,
                                       std::span<const int> labels) {
  if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("reconstruct: beta must lie in (0,1)");
  const Graph& layer = g.layer(plan.view);
  const auto rows = thresholded_rows(layer, plan, beta);
  const auto in_row = [&](NodeId i, NodeId j) { return std::binary_search(rows[i].begin(), rows[i].end(), j); };

  std::vector<Edge> edges;
  for (NodeId i = 0; i < rows.size(); ++i) {
    for (NodeId j : rows[i]) {
      const bool both = in_row(j, i);
      if (j < i && both) continue;  // emitted from row j
      if (symmetry == SymmetryRule::both && !both) continue;
      const double w = layer.has_edge(i, j) ? layer.weight(i, j) : 1.0;
      edges.push_back({std::min(i, j), std::max(i, j), w});
    }
  }
  Graph rebuilt = Graph::from_edges(layer.node_count(), edges);

  ReconstructionResult res{g.with_layer(plan.view, rebuilt), {}};
  auto& rep = res.report;
  rep.alpha = alpha;
  rep.beta = beta;
  const auto original = layer.edges();
  for (const Edge& e : original) rep.removed += !rebuilt.has_edge(e.u, e.v);
  for (const Edge& e : rebuilt.edges()) rep.added += !layer.has_edge(e.u, e.v);
  const double m = static_cast<double>(original.size());
  if (m > 0) {
    rep.aep = 100.0 * static_cast<double>(rep.added) / m;
    rep.rep = 100.0 * static_cast<double>(rep.removed) / m;
    rep.uep = 100.0 * static_cast<double>(original.size() - rep.removed) / m;
  } else {
    rep.uep = 100.0;
  }
  for (NodeId i = 0; i < layer.node_count(); ++i) {
    const auto a = layer.neighbors(i), b = rebuilt.neighbors(i);
    const bool same = a.size() == b.size() &&
                      std::equal(a.begin(), a.end(), b.begin(), [](const Neighbor& x, const Neighbor& y) {
                        return x.node == y.node && x.weight == y.weight;
                      });
    if (!same) rep.changed_rows.push_back(i);
  }
  const std::vector<double> label_values(labels.begin(), labels.end());
  rep.morans_before = safe_morans(layer, scores);
  rep.morans_after = safe_morans(rebuilt, scores);
  rep.morans_label_before = safe_morans(layer, label_values);
  rep.morans_label_after = safe_morans(rebuilt, label_values);
  return res;
}

inline ReconstructionResult reconstruct(const UrbanGraph& g, View which, const PrototypeLibrary& lib,
                                        std::span<const double> scores, std::span<const int> labels,
                                        const ReconstructConfig& cfg, const MotifCatalog& catalog = MotifCatalog()) {
  const auto plan = plan_reconstruction(g, which, lib, labels, cfg, catalog);
  return apply_plan(g, plan, cfg.alpha, cfg.beta, cfg.symmetry, scores, labels);
}

}  // namespace motifgpl
