#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "motifgpl/reconstruct.hpp"
#include "motifgpl/synth.hpp"

using namespace motifgpl;

namespace {

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("motifgpl_synth_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Triangles through each node, counted from common neighbours.
std::vector<double> node_triangles(const Graph& g) {
  std::vector<double> t(g.node_count(), 0.0);
  for (const Edge& e : g.edges())
    for (const Neighbor& nb : g.neighbors(e.u))
      if (nb.node > e.v && g.has_edge(nb.node, e.v)) t[e.u] += 1, t[e.v] += 1, t[nb.node] += 1;
  return t;
}

std::vector<MotifDistribution> local_distributions(const Graph& g, std::uint64_t seed) {
  std::vector<MotifDistribution> out;
  const Rng rng(seed, 0);
  const MotifCatalog cat;
  for (NodeId i = 0; i < g.node_count(); ++i) out.push_back(local_distribution(g, i, 8, 8, rng, cat));
  return out;
}

}  // namespace

TEST(Synth, DefaultEdgeCountsAndClassSizes) {
  const SynthCity c = generate(SynthConfig{});
  const double s = static_cast<double>(c.graph.spatial().edge_count());
  const double o = static_cast<double>(c.graph.od().edge_count());
  EXPECT_NEAR(s, 6132.0, 0.02 * 6132.0);
  EXPECT_NEAR(o, 36334.0, 0.02 * 36334.0);
  int high = 0;
  for (int v : c.truth.planted_class) high += v;
  EXPECT_EQ(high, 421);
  EXPECT_EQ(c.table.seg_label, c.truth.planted_class);
  EXPECT_EQ(c.table.feature_dim(), 256u);
}

TEST(Synth, EdgeCountsHoldAcrossSettings) {
  for (double contrast : {0.0, 0.5, 1.0})
    for (std::uint64_t seed : {1u, 2u}) {
      SynthConfig cfg = SynthConfig{}.scaled_to(300);
      cfg.structure_contrast = contrast;
      cfg.seed = seed;
      cfg.frac_high = 0.3;
      const SynthCity c = generate(cfg);
      EXPECT_NEAR(static_cast<double>(c.graph.spatial().edge_count()), static_cast<double>(cfg.spatial_edges_target),
                  0.02 * static_cast<double>(cfg.spatial_edges_target));
      EXPECT_NEAR(static_cast<double>(c.graph.od().edge_count()), static_cast<double>(cfg.od_edges_target),
                  0.02 * static_cast<double>(cfg.od_edges_target));
      int high = 0;
      for (int v : c.truth.planted_class) high += v;
      EXPECT_EQ(high, 90);
    }
}

TEST(Synth, Deterministic) {
  SynthConfig cfg = SynthConfig{}.scaled_to(200);
  cfg.seed = 5;
  const SynthCity a = generate(cfg), b = generate(cfg);
  EXPECT_EQ(a.graph.spatial(), b.graph.spatial());
  EXPECT_EQ(a.graph.od(), b.graph.od());
  EXPECT_EQ(a.table, b.table);
  EXPECT_EQ(a.truth.profile, b.truth.profile);
  cfg.seed = 6;
  EXPECT_NE(generate(cfg).graph.spatial(), a.graph.spatial());
}

TEST(Synth, HighClassHasThreeTimesTheTriangles) {
  const SynthCity c = generate(SynthConfig{});
  const auto t = node_triangles(c.graph.spatial());
  double high = 0, low = 0;
  int nh = 0, nl = 0;
  for (NodeId i = 0; i < t.size(); ++i)
    (c.truth.planted_class[i] ? (high += t[i], ++nh) : (low += t[i], ++nl));
  EXPECT_GE(high / nh, 3.0 * (low / nl)) << high / nh << " vs " << low / nl;
}

TEST(Synth, ZeroContrastClassesIndistinguishable) {
  // Chi-square homogeneity of pooled local census counts between the two
  // classes, with a label-permutation p-value (no closed-form tail needed).
  SynthConfig cfg;
  cfg.structure_contrast = 0.0;
  cfg.seed = 2;
  const SynthCity c = generate(cfg);
  const auto dists = local_distributions(c.graph.spatial(), 9);
  const std::size_t d = dists[0].counts.size();
  auto chi2 = [&](const std::vector<int>& labels) {
    std::vector<double> rows[2] = {std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
    for (std::size_t i = 0; i < dists.size(); ++i)
      for (std::size_t k = 0; k < d; ++k) rows[labels[i]][k] += static_cast<double>(dists[i].counts[k]);
    double total = 0, r[2] = {0, 0};
    std::vector<double> col(d, 0.0);
    for (int a = 0; a < 2; ++a)
      for (std::size_t k = 0; k < d; ++k) r[a] += rows[a][k], col[k] += rows[a][k], total += rows[a][k];
    double stat = 0;
    for (int a = 0; a < 2; ++a)
      for (std::size_t k = 0; k < d; ++k) {
        const double e = r[a] * col[k] / total;
        if (e > 0) stat += (rows[a][k] - e) * (rows[a][k] - e) / e;
      }
    return stat;
  };
  const double observed = chi2(c.truth.planted_class);
  std::vector<int> perm = c.truth.planted_class;
  Rng rng(1, 0);
  int exceed = 0;
  const int reps = 400;
  for (int r = 0; r < reps; ++r) {
    rng.shuffle(perm);
    exceed += chi2(perm) >= observed;
  }
  EXPECT_GT(static_cast<double>(exceed + 1) / (reps + 1), 0.01) << "chi2 " << observed;
}

TEST(Synth, NoiselessFeaturesAreLinearlySeparable) {
  SynthConfig cfg = SynthConfig{}.scaled_to(200);
  cfg.feature_noise = 0.0;
  const SynthCity c = generate(cfg);
  // Least-squares linear classifier with bias on the raw features.
  const auto n = static_cast<Eigen::Index>(c.table.node_count());
  Eigen::MatrixXd x(n, c.table.features.cols() + 1);
  x << c.table.features, Eigen::VectorXd::Ones(n);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y(i) = c.truth.planted_class[static_cast<std::size_t>(i)] ? 1.0 : -1.0;
  const Eigen::VectorXd w = x.completeOrthogonalDecomposition().solve(y);
  const Eigen::VectorXd s = x * w;
  for (Eigen::Index i = 0; i < n; ++i) EXPECT_GT(s(i) * y(i), 0.0) << i;
}

TEST(Synth, LocalCensusNearestCentroidRecoversClasses) {
  const SynthCity c = generate(SynthConfig{});
  const auto dists = local_distributions(c.graph.spatial(), 4);
  const std::size_t d = dists[0].normalized.size();
  std::vector<double> centroid[2] = {std::vector<double>(d, 0.0), std::vector<double>(d, 0.0)};
  int count[2] = {0, 0};
  for (std::size_t i = 0; i < dists.size(); ++i) {
    const int k = c.truth.planted_class[i];
    ++count[k];
    for (std::size_t j = 0; j < d; ++j) centroid[k][j] += dists[i].normalized[j];
  }
  for (int k = 0; k < 2; ++k)
    for (double& v : centroid[k]) v /= count[k];
  int agree = 0;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    double dist[2] = {0, 0};
    for (int k = 0; k < 2; ++k)
      for (std::size_t j = 0; j < d; ++j) dist[k] += std::pow(dists[i].normalized[j] - centroid[k][j], 2);
    agree += (dist[1] < dist[0] ? 1 : 0) == c.truth.planted_class[i];
  }
  EXPECT_GE(static_cast<double>(agree) / static_cast<double>(dists.size()), 0.85);
}

TEST(Synth, RejectsInfeasibleTargets) {
  SynthConfig cfg;
  cfg.n_nodes = 10;
  cfg.spatial_edges_target = 46;
  EXPECT_THROW(generate(cfg), ValidationError);
  cfg = SynthConfig{};
  cfg.structure_contrast = 1.5;
  EXPECT_THROW(generate(cfg), ValidationError);
}

TEST(Ingest, RoundTrip) {
  SynthConfig cfg = SynthConfig{}.scaled_to(120);
  cfg.seed = 8;
  const SynthCity c = generate(cfg);
  const auto dir = scratch_dir("roundtrip");
  export_city(c, dir);
  const Dataset ds = ingest_dir(dir, 0.5);
  EXPECT_EQ(ds.graph.spatial(), c.graph.spatial());
  EXPECT_EQ(ds.graph.od(), c.graph.od());
  EXPECT_EQ(ds.table, c.table);
  EXPECT_EQ(ds.report.duplicate_spatial, 0u);
}

TEST(Ingest, RejectsTauSummingToPointEight) {
  const auto dir = scratch_dir("tau");
  std::ofstream(dir / "nodes.csv") << "node_id,f_0,tau_0,tau_1\n0,1.0,0.5,0.5\n1,2.0,0.5,0.3\n";
  std::ofstream(dir / "spatial.csv") << "src,dst,weight\n0,1,1\n";
  std::ofstream(dir / "od.csv") << "src,dst,weight\n0,1,1\n";
  try {
    ingest_dir(dir);
    FAIL() << "expected rejection";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("node 1"), std::string::npos) << e.what();
  }
}

TEST(Ingest, DuplicateEdgesCounted) {
  const auto dir = scratch_dir("dup");
  std::ofstream(dir / "nodes.csv") << "node_id,f_0,tau_0,tau_1\n0,1.0,0.5,0.5\n1,2.0,1.0,0.0\n2,0.0,0.2,0.8\n";
  std::ofstream(dir / "spatial.csv") << "src,dst,weight\n0,1,1\n1,0,1\n1,2,1\n";
  std::ofstream(dir / "od.csv") << "src,dst,weight\n0,2,3\n";
  const Dataset ds = ingest_dir(dir);
  EXPECT_EQ(ds.report.duplicate_spatial, 1u);
  EXPECT_EQ(ds.graph.spatial().edge_count(), 2u);
  EXPECT_DOUBLE_EQ(ds.graph.od().weight(2, 0), 3.0);
}

TEST(Ingest, MissingFileIsValidationError) {
  const auto dir = scratch_dir("missing");
  EXPECT_THROW(ingest_dir(dir), ValidationError);
}
