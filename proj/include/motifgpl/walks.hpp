#pragma once

#include <algorithm>
#include <vector>

#include "motifgpl/error.hpp"
#include "motifgpl/graph.hpp"
#include "motifgpl/rng.hpp"

namespace motifgpl {

/// r weighted random walks of t nodes each, all starting at `root`.
struct WalkBundle {
  NodeId root = 0;
  std::vector<std::vector<NodeId>> walks;
  /// True when some walk hit a node without positive-weight neighbours and
  /// was padded by repeating it.
  bool padded = false;

  std::size_t rows() const { return walks.size(); }
  std::size_t length() const { return walks.empty() ? 0 : walks.front().size(); }

  friend bool operator==(const WalkBundle&, const WalkBundle&) = default;
};

/// Each step moves to a neighbour with probability proportional to the edge
/// weight. Dead ends repeat the current node.
inline WalkBundle random_walks(const Graph& g, NodeId root, std::size_t r, std::size_t t, Rng& rng) {
  if (root >= g.node_count()) throw ValidationError("walk root " + std::to_string(root) + " out of range");
  if (t == 0) throw ValidationError("walk length must be positive");
  WalkBundle b;
  b.root = root;
  b.walks.assign(r, std::vector<NodeId>(t, root));
  std::vector<double> cumulative;
  for (auto& walk : b.walks) {
    NodeId cur = root;
    for (std::size_t s = 1; s < t; ++s) {
      const auto nbrs = g.neighbors(cur);
      cumulative.clear();
      double total = 0.0;
      for (const Neighbor& nb : nbrs) {
        total += std::max(nb.weight, 0.0);
        cumulative.push_back(total);
      }
      if (!(total > 0.0)) {
        b.padded = true;
      } else {
        const double u = rng.uniform() * total;
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        if (it == cumulative.end()) --it;
        // Skip zero-weight entries that share a cumulative value.
        auto idx = static_cast<std::size_t>(it - cumulative.begin());
        while (nbrs[idx].weight <= 0.0 && idx + 1 < nbrs.size()) ++idx;
        cur = nbrs[idx].node;
      }
      walk[s] = cur;
    }
  }
  return b;
}

inline WalkBundle random_walks(const UrbanGraph& g, View which, NodeId root, std::size_t r, std::size_t t,
                               Rng& rng) {
  return random_walks(g.layer(which), root, r, t, rng);
}

/// Union of the edges a bundle traversed, on the distinct visited nodes.
struct Fragment {
  std::vector<NodeId> nodes;  // original ids, ascending; local id = position
  Graph graph;
  std::vector<Edge> global_edges() const {
    std::vector<Edge> out;
    for (const Edge& e : graph.edges()) out.push_back({nodes[e.u], nodes[e.v], e.weight});
    return out;
  }
};

inline Fragment bundle_to_subgraph(const WalkBundle& bundle) {
  Fragment f;
  for (const auto& walk : bundle.walks) f.nodes.insert(f.nodes.end(), walk.begin(), walk.end());
  if (f.nodes.empty()) f.nodes.push_back(bundle.root);
  std::sort(f.nodes.begin(), f.nodes.end());
  f.nodes.erase(std::unique(f.nodes.begin(), f.nodes.end()), f.nodes.end());
  const auto local = [&](NodeId v) {
    return static_cast<NodeId>(std::lower_bound(f.nodes.begin(), f.nodes.end(), v) - f.nodes.begin());
  };
  std::vector<Edge> edges;
  for (const auto& walk : bundle.walks)
    for (std::size_t s = 1; s < walk.size(); ++s)
      if (walk[s] != walk[s - 1]) edges.push_back({local(walk[s - 1]), local(walk[s]), 1.0});
  f.graph = Graph::from_edges(f.nodes.size(), edges);
  return f;
}

}  // namespace motifgpl
