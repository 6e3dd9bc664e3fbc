#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "motifgpl/graph.hpp"
#include "motifgpl/rng.hpp"
#include "oracles.hpp"

using namespace motifgpl;

namespace {

Graph path3() {
  const std::vector<Edge> e = {{0, 1, 1.0}, {1, 2, 1.0}};
  return Graph::from_edges(3, e);
}

}  // namespace

TEST(NormalizedAdjacency, SingleNodeIsSelfLoop) {
  const Eigen::MatrixXd a = normalized_adjacency(Graph(1));
  ASSERT_EQ(a.rows(), 1);
  EXPECT_DOUBLE_EQ(a(0, 0), 1.0);
}

TEST(NormalizedAdjacency, OneEdgeIsAllHalves) {
  const std::vector<Edge> e = {{0, 1, 1.0}};
  const Eigen::MatrixXd a = normalized_adjacency(Graph::from_edges(2, e));
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(a(i, j), 0.5);
}

TEST(NormalizedAdjacency, PathEntries) {
  const Eigen::MatrixXd a = normalized_adjacency(path3());
  EXPECT_NEAR(a(0, 1), 1.0 / std::sqrt(6.0), 1e-15);
  EXPECT_NEAR(a(1, 1), 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(a(0, 2), 0.0);
}

TEST(NormalizedAdjacency, SimilarityTransformIsRowStochastic) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Graph g = oracle::erdos_renyi(15, 0.1 + 0.02 * static_cast<double>(seed), seed);
    const Eigen::MatrixXd a = normalized_adjacency(g);
    EXPECT_TRUE(a.isApprox(a.transpose(), 0.0));
    for (NodeId i = 0; i < g.node_count(); ++i) {
      double s = 0.0;
      for (NodeId j = 0; j < g.node_count(); ++j)
        s += a(i, j) * std::sqrt(static_cast<double>(g.degree(j) + 1) / static_cast<double>(g.degree(i) + 1));
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(NeighborList, StarCenterAscending) {
  const std::vector<Edge> e = {{0, 3, 1.0}, {0, 1, 1.0}, {2, 0, 1.0}};
  const auto nb = neighbor_list(Graph::from_edges(4, e), 0);
  ASSERT_EQ(nb.size(), 3u);
  for (NodeId k = 0; k < 3; ++k) {
    EXPECT_EQ(nb[k].node, k + 1);
    EXPECT_DOUBLE_EQ(nb[k].weight, 1.0);
  }
}

TEST(NeighborList, IsolatedAndWeighted) {
  const std::vector<Edge> e = {{0, 1, 2.5}};
  const Graph g = Graph::from_edges(3, e);
  EXPECT_TRUE(neighbor_list(g, 2).empty());
  const auto nb = neighbor_list(g, 0);
  ASSERT_EQ(nb.size(), 1u);
  EXPECT_EQ(nb[0].node, 1u);
  EXPECT_DOUBLE_EQ(nb[0].weight, 2.5);
}

TEST(NeighborList, ZeroWeightEdgesAreSkipped) {
  const std::vector<Edge> e = {{0, 1, 0.0}, {0, 2, 1.0}};
  const auto nb = neighbor_list(Graph::from_edges(3, e), 0);
  ASSERT_EQ(nb.size(), 1u);
  EXPECT_EQ(nb[0].node, 2u);
}

TEST(Graph, RejectsInvalidEdges) {
  const std::vector<Edge> loop = {{1, 1, 1.0}};
  const std::vector<Edge> range = {{0, 5, 1.0}};
  const std::vector<Edge> neg = {{0, 1, -1.0}};
  EXPECT_THROW(Graph::from_edges(3, loop), ValidationError);
  EXPECT_THROW(Graph::from_edges(3, range), ValidationError);
  EXPECT_THROW(Graph::from_edges(3, neg), ValidationError);
}

TEST(Graph, DuplicatesCountedAndFirstKept) {
  const std::vector<Edge> e = {{0, 1, 2.0}, {1, 0, 3.0}, {1, 2, 1.0}, {0, 1, 1.0}};
  std::size_t dup = 0;
  const Graph g = Graph::from_edges(3, e, &dup);
  EXPECT_EQ(dup, 2u);
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_DOUBLE_EQ(g.weight(1, 0), 2.0);
}

TEST(Graph, AdjacencyIsSymmetric) {
  const Graph g = oracle::erdos_renyi(20, 0.3, 7);
  const Eigen::MatrixXd a = dense_adjacency(g);
  EXPECT_TRUE(a.isApprox(a.transpose(), 0.0));
  EXPECT_DOUBLE_EQ(a.diagonal().sum(), 0.0);
}

TEST(UrbanGraph, LayersAreIndependent) {
  const std::vector<Edge> s = {{0, 1, 1.0}};
  const std::vector<Edge> o = {{1, 2, 4.0}};
  const UrbanGraph g(Graph::from_edges(3, s), Graph::from_edges(3, o));
  EXPECT_TRUE(g.spatial().has_edge(0, 1));
  EXPECT_FALSE(g.od().has_edge(0, 1));
  EXPECT_DOUBLE_EQ(g.layer(View::od).weight(2, 1), 4.0);
  EXPECT_THROW(UrbanGraph(Graph(3), Graph(4)), ValidationError);
}

TEST(Rng, SameSeedAndStreamReproduce) {
  Rng a(42, 3), b(42, 3), c(42, 4);
  bool differs = false;
  for (int i = 0; i < 100; ++i) {
    const auto x = a.next_u64();
    EXPECT_EQ(x, b.next_u64());
    differs |= x != c.next_u64();
  }
  EXPECT_TRUE(differs);
}

TEST(Rng, SplitIsDeterministicAndDistinct) {
  const Rng base(9, 0);
  Rng s1 = base.split(5), s2 = base.split(5), s3 = base.split(6);
  EXPECT_EQ(s1.next_u64(), s2.next_u64());
  EXPECT_NE(s1.next_u64(), s3.next_u64());
}

TEST(Rng, UniformAndBelowInRange) {
  Rng r(1, 1);
  double mean = 0.0;
  for (int i = 0; i < 20000; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    mean += u;
    ASSERT_LT(r.below(7), 7u);
  }
  EXPECT_NEAR(mean / 20000.0, 0.5, 0.01);
}
