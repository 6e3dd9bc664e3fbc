#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <vector>

#include "motifgpl/motif.hpp"
#include "motifgpl/rng.hpp"
#include "oracles.hpp"

using namespace motifgpl;

namespace {

Eigen::MatrixXd adj_from(int k, const std::vector<std::pair<int, int>>& edges) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
  for (auto [x, y] : edges) a(x, y) = a(y, x) = 1;
  return a;
}

Graph relabel(const Graph& g, const std::vector<NodeId>& perm) {
  std::vector<Edge> e;
  for (const Edge& x : g.edges()) e.push_back({perm[x.u], perm[x.v], x.weight});
  return Graph::from_edges(g.node_count(), e);
}

}  // namespace

TEST(CanonicalCode, TriangleUnderAnyOrder) {
  const auto code = canonical_code(adj_from(3, {{0, 1}, {1, 2}, {0, 2}}));
  EXPECT_EQ(canonical_code(adj_from(3, {{2, 0}, {0, 1}, {1, 2}})), code);
}

TEST(CanonicalCode, PathReversalAndPawVersusCycle) {
  EXPECT_EQ(canonical_code(adj_from(4, {{0, 1}, {1, 2}, {2, 3}})), canonical_code(adj_from(4, {{3, 2}, {2, 1}, {1, 0}})));
  EXPECT_NE(canonical_code(adj_from(4, {{0, 1}, {1, 2}, {0, 2}, {2, 3}})),
            canonical_code(adj_from(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}})));
}

TEST(CanonicalCode, RejectsDisconnectedAndMalformed) {
  EXPECT_THROW(canonical_code(adj_from(4, {{0, 1}, {2, 3}})), ValidationError);
  Eigen::MatrixXd asym = adj_from(3, {{0, 1}, {1, 2}});
  asym(0, 1) = 0;
  EXPECT_THROW(canonical_code(asym), ValidationError);
}

TEST(CanonicalCode, EqualExactlyForIsomorphicFourNodeGraphs) {
  // Oracle: brute-force permutation isomorphism over every pair of 4-node masks.
  const int k = 4;
  std::vector<std::pair<int, int>> pairs;
  for (int b = 1; b < k; ++b)
    for (int a = 0; a < b; ++a) pairs.emplace_back(a, b);
  std::vector<std::vector<std::pair<int, int>>> graphs;
  for (std::uint32_t mask = 0; mask < (1u << pairs.size()); ++mask) {
    std::vector<std::pair<int, int>> e;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (mask >> i & 1u) e.push_back(pairs[i]);
    if (mask_connected(mask, k)) graphs.push_back(e);
  }
  for (const auto& g1 : graphs)
    for (const auto& g2 : graphs) {
      const MotifPattern p{"x", k, g2, {}};
      const oracle::AdjMatrix a = [&] {
        oracle::AdjMatrix m(k, std::vector<bool>(k, false));
        for (auto [x, y] : g1) m[x][y] = m[y][x] = true;
        return m;
      }();
      const bool iso = oracle::matches(a, {0, 1, 2, 3}, p);
      EXPECT_EQ(canonical_code(adj_from(k, g1)) == canonical_code(adj_from(k, g2)), iso);
    }
}

TEST(Catalog, DefaultHasNineDistinctPatterns) {
  const MotifCatalog cat;
  ASSERT_EQ(cat.size(), 9u);
  EXPECT_EQ(cat[0].id, "M3,1");
  EXPECT_EQ(cat[8].id, "M5,1");
  EXPECT_EQ(cat.up_to(3).size(), 2u);
}

TEST(Catalog, RejectsIsomorphicDuplicates) {
  auto pats = MotifCatalog::default_patterns();
  pats.push_back({"dup", 3, {{1, 2}, {0, 2}}, {}});
  EXPECT_THROW(MotifCatalog{pats}, ValidationError);
}

TEST(Census, MatchesBruteForceOnRandomGraphs) {
  const MotifCatalog cat;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const std::size_t n = 5 + seed % 8;
    const double p = 0.1 + 0.1 * static_cast<double>(seed % 5);
    const Graph g = oracle::erdos_renyi(n, p, seed);
    EXPECT_EQ(census(g, cat).counts, oracle::brute_force_census(g, cat)) << "seed " << seed;
  }
}

TEST(Census, FourNodeBinsPartitionConnectedSubsets) {
  const MotifCatalog cat;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Graph g = oracle::erdos_renyi(11, 0.35, 100 + seed);
    const auto c = census(g, cat).counts;
    std::uint64_t four = 0;
    for (std::size_t i = 0; i < cat.size(); ++i)
      if (cat[i].size == 4) four += c[i];
    EXPECT_EQ(four, oracle::connected_subsets(g, 4));
    EXPECT_EQ(c[0] + c[1], oracle::connected_subsets(g, 3));
  }
}

TEST(Census, InvariantUnderRelabeling) {
  Rng rng(4, 0);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Graph g = oracle::erdos_renyi(12, 0.3, seed);
    std::vector<NodeId> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    EXPECT_EQ(census(g).counts, census(relabel(g, perm)).counts);
  }
}

TEST(Census, AddingAnEdgeNeverLowersTriangles) {
  Graph g = oracle::erdos_renyi(10, 0.2, 3);
  Rng rng(8, 0);
  auto triangles = census(g).counts[1];
  for (int step = 0; step < 30; ++step) {
    auto edges = g.edges();
    const auto u = static_cast<NodeId>(rng.below(10)), v = static_cast<NodeId>(rng.below(10));
    if (u == v || g.has_edge(u, v)) continue;
    edges.push_back({u, v, 1.0});
    g = Graph::from_edges(10, edges);
    const auto t = census(g).counts[1];
    EXPECT_GE(t, triangles);
    triangles = t;
  }
}

TEST(Census, KnownSmallGraphs) {
  // K4: four triangles, one K4, no induced paths.
  std::vector<Edge> k4;
  for (NodeId a = 0; a < 4; ++a)
    for (NodeId b = a + 1; b < 4; ++b) k4.push_back({a, b, 1});
  const auto c = census(Graph::from_edges(4, k4)).counts;
  EXPECT_EQ(c, (std::vector<std::uint64_t>{0, 4, 0, 0, 0, 0, 0, 1, 0}));
  // Star K1,4: C(4,2) paths, C(4,3) 3-stars, one 4-star.
  const std::vector<Edge> star = {{0, 1, 1}, {0, 2, 1}, {0, 3, 1}, {0, 4, 1}};
  EXPECT_EQ(census(Graph::from_edges(5, star)).counts, (std::vector<std::uint64_t>{6, 0, 0, 4, 0, 0, 0, 0, 1}));
}

TEST(Census, SubsetUsesInducedSubgraph) {
  const std::vector<Edge> e = {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}, {2, 3, 1}};
  const Graph g = Graph::from_edges(4, e);
  const std::vector<NodeId> tri = {0, 1, 2};
  EXPECT_EQ(census(g, std::span<const NodeId>(tri)).counts[1], 1u);
}

TEST(Distribution, SmoothedAndNormalized) {
  const auto d = MotifDistribution::from_counts({0, 3, 1});
  double s = 0;
  for (double v : d.normalized) {
    EXPECT_GT(v, 0.0);
    s += v;
  }
  EXPECT_NEAR(s, 1.0, 1e-15);
  const auto empty = MotifDistribution::from_counts({0, 0, 0, 0});
  for (double v : empty.normalized) EXPECT_NEAR(v, 0.25, 1e-15);
}

TEST(Rewire, PreservesDegreesAndEdgeCount) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Graph g = oracle::erdos_renyi(30, 0.2, seed);
    Rng rng(seed, 1);
    const auto r = rewire_null_model(g, 10 * g.edge_count(), rng);
    EXPECT_EQ(r.graph.edge_count(), g.edge_count());
    EXPECT_EQ(oracle::sorted_degrees(r.graph), oracle::sorted_degrees(g));
    EXPECT_EQ(r.graph.degrees(), g.degrees());
    EXPECT_GT(r.accepted, 0u);
    EXPECT_LE(r.attempts, 100 * g.edge_count());
  }
}

TEST(Rewire, DeterministicForEqualStreams) {
  const Graph g = oracle::erdos_renyi(25, 0.25, 1);
  Rng a(3, 3), b(3, 3);
  EXPECT_EQ(rewire_null_model(g, 200, a).graph, rewire_null_model(g, 200, b).graph);
}

TEST(Rewire, TriangleHasNoAlternative) {
  const std::vector<Edge> e = {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}};
  const Graph g = Graph::from_edges(3, e);
  Rng rng(1, 1);
  const auto r = rewire_null_model(g, 30, rng);
  EXPECT_EQ(r.graph, g);
  EXPECT_EQ(r.accepted, 0u);
}

TEST(Significance, SingleTriangleIsMotifWithPZero) {
  const std::vector<Edge> e = {{0, 1, 1}, {1, 2, 1}, {0, 2, 1}};
  SignificanceOptions opt;
  opt.n_null = 100;
  const auto r = significance(Graph::from_edges(3, e), opt, Rng(0, 0), MotifCatalog().up_to(3));
  EXPECT_DOUBLE_EQ(r.patterns[1].empirical_p, 0.0);
  EXPECT_TRUE(r.patterns[1].is_motif);
  EXPECT_DOUBLE_EQ(r.patterns[1].f_rand_mean, 1.0);
}

TEST(Significance, IndependentOfWorkerCount) {
  const Graph g = oracle::erdos_renyi(20, 0.3, 9);
  SignificanceOptions one, many;
  one.n_null = many.n_null = 24;
  many.workers = 3;
  const auto a = significance(g, one, Rng(5, 0));
  const auto b = significance(g, many, Rng(5, 0));
  for (std::size_t k = 0; k < a.patterns.size(); ++k) {
    EXPECT_EQ(a.patterns[k].f_rand_mean, b.patterns[k].f_rand_mean);
    EXPECT_EQ(a.patterns[k].empirical_p, b.patterns[k].empirical_p);
  }
}

TEST(Significance, AbsentPatternBoundary) {
  // A path has no triangles; significance still follows the p <= P_M rule.
  const std::vector<Edge> e = {{0, 1, 1}, {1, 2, 1}, {2, 3, 1}};
  SignificanceOptions opt;
  opt.n_null = 50;
  const auto r = significance(Graph::from_edges(4, e), opt, Rng(1, 0), MotifCatalog().up_to(3));
  EXPECT_DOUBLE_EQ(r.patterns[1].f_real, 0.0);
  EXPECT_EQ(r.patterns[1].is_motif, r.patterns[1].empirical_p <= opt.p_m);
  EXPECT_THROW(significance(Graph::from_edges(4, e), SignificanceOptions{0, 0.05, 10.0, 1}, Rng(1, 0)),
               ValidationError);
}
