#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_set>
#include <utility>
#include <vector>

#include "motifgpl/error.hpp"
#include "motifgpl/graph.hpp"
#include "motifgpl/rng.hpp"

namespace motifgpl {

inline constexpr int kMaxMotifSize = 5;

/// Bit index of the unordered pair {a, b}, a < b, in a small-graph adjacency
/// mask. The layout does not depend on the graph size, so the mask of a
/// k-node graph is a prefix of the mask of any extension of it.
constexpr int pair_bit(int a, int b) { return b * (b - 1) / 2 + a; }

inline constexpr int pair_count(int k) { return k * (k - 1) / 2; }

/// Canonical form of a connected graph on k <= 5 vertices: the size in the
/// high bits and the minimum adjacency mask over all k! vertex orders below.
/// Two graphs share a code iff they are isomorphic.
struct MotifCode {
  std::uint32_t value = 0;
  friend bool operator==(MotifCode, MotifCode) = default;
  friend auto operator<=>(MotifCode, MotifCode) = default;
};

inline bool mask_connected(std::uint32_t mask, int k) {
  std::uint32_t seen = 1, frontier = 1;
  while (frontier) {
    std::uint32_t next = 0;
    for (int a = 0; a < k; ++a) {
      if (!(frontier >> a & 1u)) continue;
      for (int b = 0; b < k; ++b) {
        if (a == b || (seen >> b & 1u)) continue;
        const int bit = a < b ? pair_bit(a, b) : pair_bit(b, a);
        if (mask >> bit & 1u) next |= 1u << b;
      }
    }
    seen |= next;
    frontier = next;
  }
  return seen == (1u << k) - 1;
}

inline std::uint32_t permute_mask(std::uint32_t mask, int k, const std::array<int, kMaxMotifSize>& perm) {
  std::uint32_t out = 0;
  for (int b = 1; b < k; ++b)
    for (int a = 0; a < b; ++a) {
      const int pa = perm[a], pb = perm[b];
      const int src = pa < pb ? pair_bit(pa, pb) : pair_bit(pb, pa);
      if (mask >> src & 1u) out |= 1u << pair_bit(a, b);
    }
  return out;
}

/// Canonical code from a raw mask (pair_bit layout).
inline MotifCode canonical_code_from_mask(std::uint32_t mask, int k) {
  if (k < 1 || k > kMaxMotifSize) throw ValidationError("canonical code supports 1..5 vertices");
  if (!mask_connected(mask, k)) throw ValidationError("canonical code requires a connected graph");
  std::array<int, kMaxMotifSize> perm{};
  std::iota(perm.begin(), perm.begin() + k, 0);
  std::uint32_t best = ~0u;
  do {
    best = std::min(best, permute_mask(mask, k, perm));
  } while (std::next_permutation(perm.begin(), perm.begin() + k));
  return MotifCode{(static_cast<std::uint32_t>(k) << 16) | best};
}

/// Canonical code of a small symmetric 0/1 matrix.
inline MotifCode canonical_code(const Eigen::MatrixXd& adj) {
  const auto k = static_cast<int>(adj.rows());
  if (adj.cols() != adj.rows()) throw ValidationError("adjacency must be square");
  if (k < 1 || k > kMaxMotifSize) throw ValidationError("canonical code supports 1..5 vertices");
  std::uint32_t mask = 0;
  for (int b = 0; b < k; ++b) {
    if (adj(b, b) != 0.0) throw ValidationError("adjacency has a self-loop");
    for (int a = 0; a < b; ++a) {
      if (adj(a, b) != adj(b, a)) throw ValidationError("adjacency is not symmetric");
      if (adj(a, b) != 0.0) mask |= 1u << pair_bit(a, b);
    }
  }
  return canonical_code_from_mask(mask, k);
}

struct MotifPattern {
  std::string id;
  int size = 0;
  std::vector<std::pair<int, int>> edges;
  MotifCode code;
};

/// Ordered list of connected 3/4/5-node patterns; indices into it are the
/// bins of every motif distribution.
class MotifCatalog {
 public:
  MotifCatalog() : MotifCatalog(default_patterns()) {}

  explicit MotifCatalog(std::vector<MotifPattern> patterns) : patterns_(std::move(patterns)) {
    for (auto& p : patterns_) {
      if (p.size < 2 || p.size > kMaxMotifSize)
        throw ValidationError("motif " + p.id + ": size must be in 2..5");
      std::uint32_t mask = 0;
      for (auto [a, b] : p.edges) {
        if (a == b || a < 0 || b < 0 || a >= p.size || b >= p.size)
          throw ValidationError("motif " + p.id + ": bad edge");
        mask |= 1u << (a < b ? pair_bit(a, b) : pair_bit(b, a));
      }
      p.code = canonical_code_from_mask(mask, p.size);
      max_size_ = std::max(max_size_, p.size);
      min_size_ = std::min(min_size_, p.size);
    }
    for (std::size_t i = 0; i < patterns_.size(); ++i)
      for (std::size_t j = 0; j < i; ++j)
        if (patterns_[i].code == patterns_[j].code)
          throw ValidationError("motifs " + patterns_[j].id + " and " + patterns_[i].id + " are isomorphic");
    build_tables();
  }

  /// M3,1 path, M3,2 triangle, the six connected 4-node graphs, and the 4-star.
  static std::vector<MotifPattern> default_patterns() {
    return {
        {"M3,1", 3, {{0, 1}, {1, 2}}, {}},
        {"M3,2", 3, {{0, 1}, {1, 2}, {0, 2}}, {}},
        {"M4,1", 4, {{0, 1}, {1, 2}, {2, 3}}, {}},
        {"M4,2", 4, {{0, 1}, {0, 2}, {0, 3}}, {}},
        {"M4,3", 4, {{0, 1}, {1, 2}, {0, 2}, {2, 3}}, {}},
        {"M4,4", 4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}}, {}},
        {"M4,5", 4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {2, 3}}, {}},
        {"M4,6", 4, {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}}, {}},
        {"M5,1", 5, {{0, 1}, {0, 2}, {0, 3}, {0, 4}}, {}},
    };
  }

  /// The sub-catalog of patterns with at most `k` nodes.
  MotifCatalog up_to(int k) const {
    std::vector<MotifPattern> keep;
    for (const auto& p : patterns_)
      if (p.size <= k) keep.push_back(p);
    return MotifCatalog(std::move(keep));
  }

  std::size_t size() const { return patterns_.size(); }
  const MotifPattern& operator[](std::size_t i) const { return patterns_[i]; }
  const std::vector<MotifPattern>& patterns() const { return patterns_; }
  int max_size() const { return max_size_; }
  int min_size() const { return min_size_; }

  std::optional<std::size_t> index_of(const std::string& id) const {
    for (std::size_t i = 0; i < patterns_.size(); ++i)
      if (patterns_[i].id == id) return i;
    return std::nullopt;
  }

  /// Catalog bin of a raw k-node mask, or -1 when the induced graph is not a
  /// catalog pattern.
  int classify(std::uint32_t mask, int k) const { return table_[k][mask]; }

 private:
  void build_tables() {
    for (int k = 0; k <= kMaxMotifSize; ++k) {
      table_[k].assign(std::size_t{1} << pair_count(k), -1);
      bool wanted = false;
      for (const auto& p : patterns_) wanted |= p.size == k;
      if (!wanted) continue;
      for (std::uint32_t mask = 0; mask < table_[k].size(); ++mask) {
        if (!mask_connected(mask, k)) continue;
        const MotifCode code = canonical_code_from_mask(mask, k);
        for (std::size_t i = 0; i < patterns_.size(); ++i)
          if (patterns_[i].code == code) table_[k][mask] = static_cast<std::int16_t>(i);
      }
    }
  }

  std::vector<MotifPattern> patterns_;
  int max_size_ = 0;
  int min_size_ = kMaxMotifSize;
  std::array<std::vector<std::int16_t>, kMaxMotifSize + 1> table_;
};

inline constexpr double kMotifSmoothing = 1e-6;

/// Histogram over a catalog.
struct MotifDistribution {
  std::vector<std::uint64_t> counts;
  std::vector<double> normalized;

  std::uint64_t total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

  static MotifDistribution from_counts(std::vector<std::uint64_t> counts) {
    MotifDistribution d;
    d.counts = std::move(counts);
    d.normalized.resize(d.counts.size());
    const double denom = static_cast<double>(d.total()) + kMotifSmoothing * static_cast<double>(d.counts.size());
    for (std::size_t i = 0; i < d.counts.size(); ++i)
      d.normalized[i] = (static_cast<double>(d.counts[i]) + kMotifSmoothing) / denom;
    return d;
  }

  friend bool operator==(const MotifDistribution&, const MotifDistribution&) = default;
};

namespace detail {

class EsuCounter {
 public:
  EsuCounter(const Graph& g, const MotifCatalog& catalog)
      : g_(g), catalog_(catalog), counts_(catalog.size(), 0), marks_(g.node_count(), 0) {}

  std::vector<std::uint64_t> run() {
    if (catalog_.size() == 0) return counts_;
    kmax_ = catalog_.max_size();
    kmin_ = catalog_.min_size();
    for (NodeId v = 0; v < g_.node_count(); ++v) {
      sub_[0] = v;
      mark(v, +1);
      std::vector<NodeId> ext;
      for (const Neighbor& nb : g_.neighbors(v))
        if (nb.node > v) ext.push_back(nb.node);
      extend(1, 0u, ext, v);
      mark(v, -1);
    }
    return counts_;
  }

 private:
  // Marks the closed neighbourhood of u; marks_[x] > 0 iff x is in the current
  // subgraph or adjacent to it.
  void mark(NodeId u, int delta) {
    marks_[u] += delta;
    for (const Neighbor& nb : g_.neighbors(u)) marks_[nb.node] += delta;
  }

  void extend(int size, std::uint32_t mask, std::vector<NodeId>& ext, NodeId root) {
    if (size >= kmin_) {
      const int bin = catalog_.classify(mask, size);
      if (bin >= 0) ++counts_[static_cast<std::size_t>(bin)];
    }
    if (size == kmax_) return;
    while (!ext.empty()) {
      const NodeId w = ext.back();
      ext.pop_back();
      std::vector<NodeId> next = ext;
      for (const Neighbor& nb : g_.neighbors(w))
        if (nb.node > root && marks_[nb.node] == 0) next.push_back(nb.node);
      std::uint32_t m = mask;
      for (int a = 0; a < size; ++a)
        if (g_.has_edge(sub_[a], w)) m |= 1u << pair_bit(a, size);
      sub_[size] = w;
      mark(w, +1);
      extend(size + 1, m, next, root);
      mark(w, -1);
    }
  }

  const Graph& g_;
  const MotifCatalog& catalog_;
  std::vector<std::uint64_t> counts_;
  std::vector<int> marks_;
  std::array<NodeId, kMaxMotifSize> sub_{};
  int kmax_ = 0;
  int kmin_ = 0;
};

}  // namespace detail

/// Induced census: every connected vertex set of a catalog size is counted
/// once, under the pattern its induced edges form. Enumeration is ESU
/// (each connected set is generated exactly once, rooted at its minimum vertex).
inline MotifDistribution census(const Graph& g, const MotifCatalog& catalog = MotifCatalog()) {
  return MotifDistribution::from_counts(detail::EsuCounter(g, catalog).run());
}

inline MotifDistribution census(const Graph& g, std::span<const NodeId> subset,
                                const MotifCatalog& catalog = MotifCatalog()) {
  return census(g.induced(subset), catalog);
}

inline MotifDistribution census(const UrbanGraph& g, View which,
                                std::optional<std::span<const NodeId>> subset = std::nullopt,
                                const MotifCatalog& catalog = MotifCatalog()) {
  return subset ? census(g.layer(which), *subset, catalog) : census(g.layer(which), catalog);
}

struct RewireResult {
  Graph graph;
  std::size_t accepted = 0;
  std::size_t attempts = 0;
};

/// Degree-preserving randomization by double-edge swaps. Performs up to
/// `swaps` accepted swaps; a proposal that would create a self-loop or a
/// repeated edge is skipped, and at most `attempt_factor * swaps` proposals are made.
inline RewireResult rewire_null_model(const Graph& g, std::size_t swaps, Rng& rng,
                                      std::size_t attempt_factor = 10) {
  RewireResult res;
  if (swaps == 0 || g.edge_count() < 2) {
    res.graph = g;
    return res;
  }
  std::vector<Edge> edges = g.edges();
  const auto key = [](NodeId a, NodeId b) {
    return a < b ? (std::uint64_t{a} << 32) | b : (std::uint64_t{b} << 32) | a;
  };
  std::unordered_set<std::uint64_t> present;
  present.reserve(edges.size() * 2);
  for (const Edge& e : edges) present.insert(key(e.u, e.v));

  const std::size_t max_attempts = attempt_factor * swaps;
  while (res.accepted < swaps && res.attempts < max_attempts) {
    ++res.attempts;
    const auto i = static_cast<std::size_t>(rng.below(edges.size()));
    const auto j = static_cast<std::size_t>(rng.below(edges.size()));
    const bool cross = rng.bernoulli(0.5);
    if (i == j) continue;
    Edge& e1 = edges[i];
    Edge& e2 = edges[j];
    // (a,b),(c,d) -> (a,d),(c,b)  or  (a,c),(b,d)
    const NodeId a = e1.u, b = e1.v;
    const NodeId c = cross ? e2.v : e2.u;
    const NodeId d = cross ? e2.u : e2.v;
    if (a == d || c == b) continue;
    const auto k1 = key(a, d), k2 = key(c, b);
    if (k1 == k2 || present.count(k1) || present.count(k2)) continue;
    present.erase(key(a, b));
    present.erase(key(e2.u, e2.v));
    present.insert(k1);
    present.insert(k2);
    e1 = Edge{std::min(a, d), std::max(a, d), e1.weight};
    e2 = Edge{std::min(c, b), std::max(c, b), e2.weight};
    ++res.accepted;
  }
  res.graph = Graph::from_edges(g.node_count(), edges);
  return res;
}

inline RewireResult rewire_null_model(const UrbanGraph& g, View which, std::size_t swaps, Rng& rng) {
  return rewire_null_model(g.layer(which), swaps, rng);
}

struct PatternSignificance {
  std::string id;
  double f_real = 0.0;
  double f_rand_mean = 0.0;
  double f_rand_sd = 0.0;
  double empirical_p = 0.0;
  bool is_motif = false;
};

struct SignificanceResult {
  std::vector<PatternSignificance> patterns;
  std::size_t n_null = 0;
  double p_m = 0.05;
};

struct SignificanceOptions {
  std::size_t n_null = 1000;
  double p_m = 0.05;
  /// Accepted swaps per null graph, as a multiple of the edge count.
  double swaps_per_edge = 10.0;
  unsigned workers = 1;
};

/// Motif significance against degree-preserving null models: a pattern is a
/// motif when the fraction of null graphs whose count strictly exceeds the
/// real count is at most p_m. Replica r draws from rng.split(r), so results do
/// not depend on the worker count.
inline SignificanceResult significance(const Graph& g, const SignificanceOptions& opt, const Rng& rng,
                                       const MotifCatalog& catalog = MotifCatalog()) {
  if (opt.n_null < 1) throw ValidationError("significance needs n_null >= 1");
  if (!(opt.p_m > 0.0 && opt.p_m < 1.0)) throw ValidationError("P_M must lie in (0,1)");
  const MotifDistribution real = census(g, catalog);
  const std::size_t d = catalog.size();
  const auto swaps = static_cast<std::size_t>(std::llround(opt.swaps_per_edge * static_cast<double>(g.edge_count())));

  std::vector<std::vector<std::uint64_t>> null_counts(opt.n_null);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t r = begin; r < end; ++r) {
      Rng replica = rng.split(r);
      null_counts[r] = census(rewire_null_model(g, swaps, replica).graph, catalog).counts;
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(opt.workers, static_cast<unsigned>(opt.n_null)));
  if (workers == 1) {
    work(0, opt.n_null);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (opt.n_null + workers - 1) / workers;
    for (unsigned w = 0; w < workers; ++w) {
      const std::size_t b = w * chunk, e = std::min(opt.n_null, b + chunk);
      if (b < e) pool.emplace_back(work, b, e);
    }
    for (auto& t : pool) t.join();
  }

  SignificanceResult res;
  res.n_null = opt.n_null;
  res.p_m = opt.p_m;
  for (std::size_t k = 0; k < d; ++k) {
    PatternSignificance ps;
    ps.id = catalog[k].id;
    ps.f_real = static_cast<double>(real.counts[k]);
    double sum = 0.0, sq = 0.0;
    std::size_t exceed = 0;
    for (const auto& c : null_counts) {
      const auto f = static_cast<double>(c[k]);
      sum += f;
      if (c[k] > real.counts[k]) ++exceed;
    }
    ps.f_rand_mean = sum / static_cast<double>(opt.n_null);
    for (const auto& c : null_counts) sq += (static_cast<double>(c[k]) - ps.f_rand_mean) * (static_cast<double>(c[k]) - ps.f_rand_mean);
    ps.f_rand_sd = opt.n_null > 1 ? std::sqrt(sq / static_cast<double>(opt.n_null - 1)) : 0.0;
    ps.empirical_p = static_cast<double>(exceed) / static_cast<double>(opt.n_null);
    ps.is_motif = ps.empirical_p <= opt.p_m;
    res.patterns.push_back(ps);
  }
  return res;
}

inline SignificanceResult significance(const UrbanGraph& g, View which, const SignificanceOptions& opt,
                                       const Rng& rng, const MotifCatalog& catalog = MotifCatalog()) {
  return significance(g.layer(which), opt, rng, catalog);
}

}  // namespace motifgpl
