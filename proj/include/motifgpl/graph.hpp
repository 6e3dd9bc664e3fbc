#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "motifgpl/error.hpp"

namespace motifgpl {

using NodeId = std::uint32_t;

/// Which edge set of an UrbanGraph an operation runs on.
enum class View { spatial, od };

inline const char* to_string(View v) { return v == View::spatial ? "spatial" : "od"; }

inline View parse_view(const std::string& s) {
  if (s == "spatial" || s == "s") return View::spatial;
  if (s == "od" || s == "o") return View::od;
  throw ValidationError("unknown graph view '" + s + "' (expected spatial|od)");
}

struct Edge {
  NodeId u = 0;
  NodeId v = 0;
  double weight = 1.0;

  friend bool operator==(const Edge&, const Edge&) = default;
};

struct Neighbor {
  NodeId node = 0;
  double weight = 1.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Undirected simple graph with nonnegative edge weights. Adjacency lists are
/// kept sorted by neighbor index. Immutable once built.
class Graph {
 public:
  Graph() = default;
  explicit Graph(std::size_t n) : adj_(n) {}

  /// Builds from an edge list. Self-loops and out-of-range endpoints are
  /// rejected; repeated pairs keep the first weight. `duplicates`, when given,
  /// receives the number of dropped repeats.
  static Graph from_edges(std::size_t n, std::span<const Edge> edges,
                          std::size_t* duplicates = nullptr) {
    Graph g(n);
    std::vector<Edge> sorted;
    sorted.reserve(edges.size());
    for (const Edge& e : edges) {
      if (e.u >= n || e.v >= n)
        throw ValidationError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                              ") has endpoint outside [0," + std::to_string(n) + ")");
      if (e.u == e.v) throw ValidationError("self-loop at node " + std::to_string(e.u));
      if (!(e.weight >= 0.0) || !std::isfinite(e.weight))
        throw ValidationError("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                              ") has invalid weight");
      sorted.push_back(e.u < e.v ? e : Edge{e.v, e.u, e.weight});
    }
    // Stable so that the first occurrence of a repeated pair wins.
    std::stable_sort(sorted.begin(), sorted.end(), [](const Edge& a, const Edge& b) {
      return a.u != b.u ? a.u < b.u : a.v < b.v;
    });
    std::size_t dups = 0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      if (i > 0 && sorted[i].u == sorted[i - 1].u && sorted[i].v == sorted[i - 1].v) {
        ++dups;
        continue;
      }
      g.adj_[sorted[i].u].push_back({sorted[i].v, sorted[i].weight});
      g.adj_[sorted[i].v].push_back({sorted[i].u, sorted[i].weight});
      ++g.edge_count_;
    }
    for (auto& row : g.adj_)
      std::sort(row.begin(), row.end(),
                [](const Neighbor& a, const Neighbor& b) { return a.node < b.node; });
    if (duplicates) *duplicates = dups;
    return g;
  }

  std::size_t node_count() const { return adj_.size(); }
  std::size_t edge_count() const { return edge_count_; }
  std::size_t degree(NodeId u) const { return adj_[u].size(); }

  std::span<const Neighbor> neighbors(NodeId u) const { return adj_[u]; }

  bool has_edge(NodeId u, NodeId v) const { return find(u, v) != nullptr; }

  /// Weight of edge {u,v}; 0 when absent.
  double weight(NodeId u, NodeId v) const {
    const Neighbor* nb = find(u, v);
    return nb ? nb->weight : 0.0;
  }

  /// Edge list with u < v, sorted lexicographically.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    out.reserve(edge_count_);
    for (NodeId u = 0; u < adj_.size(); ++u)
      for (const Neighbor& nb : adj_[u])
        if (u < nb.node) out.push_back({u, nb.node, nb.weight});
    return out;
  }

  std::vector<std::size_t> degrees() const {
    std::vector<std::size_t> d(adj_.size());
    for (std::size_t i = 0; i < adj_.size(); ++i) d[i] = adj_[i].size();
    return d;
  }

  /// Induced subgraph on `nodes` (relabelled 0..k-1 in the given order).
  Graph induced(std::span<const NodeId> nodes) const {
    std::vector<std::int64_t> local(adj_.size(), -1);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (nodes[i] >= adj_.size())
        throw ValidationError("subset node " + std::to_string(nodes[i]) + " out of range");
      if (local[nodes[i]] >= 0)
        throw ValidationError("subset node " + std::to_string(nodes[i]) + " repeated");
      local[nodes[i]] = static_cast<std::int64_t>(i);
    }
    std::vector<Edge> es;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      for (const Neighbor& nb : adj_[nodes[i]])
        if (local[nb.node] > static_cast<std::int64_t>(i))
          es.push_back({static_cast<NodeId>(i), static_cast<NodeId>(local[nb.node]), nb.weight});
    return from_edges(nodes.size(), es);
  }

  friend bool operator==(const Graph& a, const Graph& b) {
    return a.edge_count_ == b.edge_count_ && a.adj_ == b.adj_;
  }

 private:
  const Neighbor* find(NodeId u, NodeId v) const {
    if (u >= adj_.size()) return nullptr;
    const auto& row = adj_[u];
    auto it = std::lower_bound(row.begin(), row.end(), v,
                               [](const Neighbor& a, NodeId x) { return a.node < x; });
    return (it != row.end() && it->node == v) ? &*it : nullptr;
  }

  std::vector<std::vector<Neighbor>> adj_;
  std::size_t edge_count_ = 0;
};

/// Shared node set with a spatial-proximity edge set and an origin-destination
/// flow edge set.
class UrbanGraph {
 public:
  UrbanGraph() = default;
  UrbanGraph(Graph spatial, Graph od) : spatial_(std::move(spatial)), od_(std::move(od)) {
    if (spatial_.node_count() != od_.node_count())
      throw ValidationError("spatial and OD graphs disagree on node count");
    if (spatial_.node_count() == 0) throw ValidationError("graph must have at least one node");
  }

  std::size_t node_count() const { return spatial_.node_count(); }
  const Graph& layer(View v) const { return v == View::spatial ? spatial_ : od_; }
  const Graph& spatial() const { return spatial_; }
  const Graph& od() const { return od_; }

  UrbanGraph with_layer(View v, Graph g) const {
    return v == View::spatial ? UrbanGraph(std::move(g), od_) : UrbanGraph(spatial_, std::move(g));
  }

  friend bool operator==(const UrbanGraph&, const UrbanGraph&) = default;

 private:
  Graph spatial_;
  Graph od_;
};

/// Neighbors of `node` with positive weight, ascending by index.
inline std::vector<Neighbor> neighbor_list(const Graph& g, NodeId node) {
  if (node >= g.node_count()) throw ValidationError("node " + std::to_string(node) + " out of range");
  std::vector<Neighbor> out;
  for (const Neighbor& nb : g.neighbors(node))
    if (nb.weight > 0.0) out.push_back(nb);
  return out;
}

inline std::vector<Neighbor> neighbor_list(const UrbanGraph& g, View which, NodeId node) {
  return neighbor_list(g.layer(which), node);
}

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// D^-1/2 (A + I) D^-1/2 over the binary adjacency, with D the degree matrix of A + I.
inline SparseMatrix normalized_adjacency(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  std::vector<double> inv_sqrt(g.node_count());
  for (std::size_t i = 0; i < g.node_count(); ++i)
    inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(static_cast<NodeId>(i)) + 1));
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * g.edge_count() + g.node_count());
  for (NodeId i = 0; i < g.node_count(); ++i) {
    trips.emplace_back(i, i, inv_sqrt[i] * inv_sqrt[i]);
    for (const Neighbor& nb : g.neighbors(i)) trips.emplace_back(i, nb.node, inv_sqrt[i] * inv_sqrt[nb.node]);
  }
  SparseMatrix m(n, n);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

inline SparseMatrix normalized_adjacency(const UrbanGraph& g, View which) {
  return normalized_adjacency(g.layer(which));
}

/// Dense 0/1 adjacency.
inline Eigen::MatrixXd dense_adjacency(const Graph& g) {
  const auto n = static_cast<Eigen::Index>(g.node_count());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  for (NodeId i = 0; i < g.node_count(); ++i)
    for (const Neighbor& nb : g.neighbors(i)) a(i, nb.node) = 1.0;
  return a;
}

}  // namespace motifgpl
