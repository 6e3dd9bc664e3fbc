#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "motifgpl/config.hpp"
#include "motifgpl/error.hpp"
#include "motifgpl/graph.hpp"
#include "motifgpl/io.hpp"
#include "motifgpl/node_table.hpp"
#include "motifgpl/rng.hpp"

namespace motifgpl {

/// Planted synthetic city. High-segregation nodes sit in dense spatial
/// communities (triangle and cycle rich) and reach the rest of the city
/// through hub stars and long OD chains; low-segregation nodes sit on a
/// bipartite chain lattice (no triangles) with short OD links along it.
/// `structure_contrast` is the fraction of each class's edges drawn from its
/// planted structure; the remainder are uniform random edges within the class,
/// so 0 makes the two classes structurally identical.
struct SynthConfig {
  std::size_t n_nodes = 842;
  std::size_t spatial_edges_target = 6132;
  std::size_t od_edges_target = 36334;
  double frac_high = 0.5;
  double structure_contrast = 1.0;
  double feature_noise = 0.1;
  double feature_signal = 1.0;
  int c = 3;
  int d_in = 256;
  std::size_t community_size = 16;
  double spatial_cross_fraction = 0.1;
  double od_cross_fraction = 0.3;
  double od_hub_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_nodes < 4) throw ValidationError("synth: need at least 4 nodes");
    if (!(frac_high > 0.0 && frac_high < 1.0)) throw ValidationError("synth: frac_high must lie in (0,1)");
    if (!(structure_contrast >= 0.0 && structure_contrast <= 1.0))
      throw ValidationError("synth: structure_contrast must lie in [0,1]");
    if (!(feature_noise >= 0.0)) throw ValidationError("synth: feature_noise must be >= 0");
    if (c < 2) throw ValidationError("synth: c must be >= 2");
    if (d_in < 1) throw ValidationError("synth: d_in must be >= 1");
    if (community_size < 3) throw ValidationError("synth: community_size must be >= 3");
    for (double f : {spatial_cross_fraction, od_cross_fraction, od_hub_fraction})
      if (!(f >= 0.0 && f < 1.0)) throw ValidationError("synth: fractions must lie in [0,1)");
    const std::size_t max_edges = n_nodes * (n_nodes - 1) / 2;
    if (spatial_edges_target > max_edges || od_edges_target > max_edges)
      throw ValidationError("synth: infeasible edge target (max " + std::to_string(max_edges) + ")");
  }

  void apply(const KeyValues& kv) {
    ConfigReader r(kv);
    r.get("n_nodes", n_nodes);
    r.get("spatial_edges_target", spatial_edges_target);
    r.get("od_edges_target", od_edges_target);
    r.get("frac_high", frac_high);
    r.get("structure_contrast", structure_contrast);
    r.get("feature_noise", feature_noise);
    r.get("feature_signal", feature_signal);
    r.get("c", c);
    r.get("d_in", d_in);
    r.get("community_size", community_size);
    r.get("spatial_cross_fraction", spatial_cross_fraction);
    r.get("od_cross_fraction", od_cross_fraction);
    r.get("od_hub_fraction", od_hub_fraction);
    r.get("seed", seed);
    r.reject_unknown();
    validate();
  }

  /// Same city scaled down to `n` nodes, keeping average degrees.
  SynthConfig scaled_to(std::size_t n) const {
    SynthConfig s = *this;
    const double f = static_cast<double>(n) / static_cast<double>(n_nodes);
    s.n_nodes = n;
    s.spatial_edges_target = static_cast<std::size_t>(std::llround(static_cast<double>(spatial_edges_target) * f));
    s.od_edges_target = static_cast<std::size_t>(std::llround(static_cast<double>(od_edges_target) * f));
    const std::size_t max_edges = n * (n - 1) / 2;
    // Small cities cannot hold the full OD density.
    s.od_edges_target = std::min(s.od_edges_target, max_edges / 3);
    s.spatial_edges_target = std::min(s.spatial_edges_target, max_edges / 3);
    return s;
  }
};

struct GroundTruth {
  std::vector<int> planted_class;    // 1 = high segregation
  std::vector<std::string> profile;  // "cycle", "chain" or "mixed"
  std::vector<int> community;        // spatial community (high) or chain position (low)
};

struct SynthCity {
  UrbanGraph graph;
  NodeTable table;
  GroundTruth truth;
};

namespace detail {

inline std::uint64_t pair_key(NodeId a, NodeId b) {
  return a < b ? (std::uint64_t{a} << 32) | b : (std::uint64_t{b} << 32) | a;
}

class EdgeBuilder {
 public:
  bool add(NodeId a, NodeId b) {
    if (a == b || !seen_.insert(pair_key(a, b)).second) return false;
    edges_.push_back({a, b, 1.0});
    return true;
  }
  std::size_t size() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }

  /// Takes pairs from `pool` in order until `count` new edges were added.
  std::size_t take(const std::vector<std::pair<NodeId, NodeId>>& pool, std::size_t count) {
    std::size_t added = 0;
    for (const auto& [a, b] : pool) {
      if (added == count) break;
      added += add(a, b);
    }
    return added;
  }

  /// Uniform random pairs between (or within, when the spans alias) two node groups.
  void random_fill(const std::vector<NodeId>& left, const std::vector<NodeId>& right, std::size_t count, Rng& rng) {
    std::size_t added = 0, guard = 0;
    const std::size_t max_guard = 200 * count + 1000;
    while (added < count && guard++ < max_guard) {
      const NodeId a = left[rng.below(left.size())];
      const NodeId b = right[rng.below(right.size())];
      added += add(a, b);
    }
    if (added < count) throw ValidationError("synth: infeasible edge target (class subgraph saturated)");
  }

 private:
  std::unordered_set<std::uint64_t> seen_;
  std::vector<Edge> edges_;
};

inline std::size_t pairs_within(std::size_t k) { return k * (k - 1) / 2; }

}  // namespace detail

inline SynthCity generate(const SynthConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed, 0);
  const std::size_t n = cfg.n_nodes;
  const auto n_high = static_cast<std::size_t>(std::llround(cfg.frac_high * static_cast<double>(n)));
  if (n_high < 2 || n_high + 2 > n) throw ValidationError("synth: each class needs at least two nodes");

  std::vector<NodeId> order(n);
  for (NodeId i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  const std::vector<NodeId> high(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_high));
  const std::vector<NodeId> low(order.begin() + static_cast<std::ptrdiff_t>(n_high), order.end());

  SynthCity city;
  auto& truth = city.truth;
  truth.planted_class.assign(n, 0);
  truth.profile.assign(n, cfg.structure_contrast > 0.0 ? "chain" : "mixed");
  truth.community.assign(n, 0);
  for (std::size_t r = 0; r < high.size(); ++r) {
    truth.planted_class[high[r]] = 1;
    truth.profile[high[r]] = cfg.structure_contrast > 0.0 ? "cycle" : "mixed";
    truth.community[high[r]] = static_cast<int>(r / cfg.community_size);
  }
  for (std::size_t r = 0; r < low.size(); ++r) truth.community[low[r]] = static_cast<int>(r);

  // Planted pools.
  std::vector<std::pair<NodeId, NodeId>> community_pairs;
  for (std::size_t start = 0; start < high.size(); start += cfg.community_size) {
    const std::size_t end = std::min(high.size(), start + cfg.community_size);
    for (std::size_t a = start; a < end; ++a)
      for (std::size_t b = a + 1; b < end; ++b) community_pairs.emplace_back(high[a], high[b]);
  }
  rng.shuffle(community_pairs);
  std::vector<std::pair<NodeId, NodeId>> lattice_pairs;  // odd offsets keep the lattice bipartite
  for (std::size_t off = 1; off < low.size(); off += 2)
    for (std::size_t a = 0; a + off < low.size(); ++a) lattice_pairs.emplace_back(low[a], low[a + off]);

  const auto split_budget = [&](std::size_t total, double cross_fraction) {
    const auto cross = static_cast<std::size_t>(std::llround(cross_fraction * static_cast<double>(total)));
    const std::size_t within = total - cross;
    const auto b_high =
        static_cast<std::size_t>(std::llround(static_cast<double>(within) * static_cast<double>(n_high) / static_cast<double>(n)));
    return std::array<std::size_t, 3>{b_high, within - b_high, cross};
  };
  const auto check = [&](std::array<std::size_t, 3> b) {
    if (b[0] > detail::pairs_within(high.size()) || b[1] > detail::pairs_within(low.size()) ||
        b[2] > high.size() * low.size())
      throw ValidationError("synth: infeasible edge target for the class sizes");
  };
  const auto planted = [&](std::size_t budget) {
    return static_cast<std::size_t>(std::llround(cfg.structure_contrast * static_cast<double>(budget)));
  };

  // Spatial graph.
  {
    const auto budget = split_budget(cfg.spatial_edges_target, cfg.spatial_cross_fraction);
    check(budget);
    detail::EdgeBuilder eb;
    const std::size_t got_high = eb.take(community_pairs, planted(budget[0]));
    eb.random_fill(high, high, budget[0] - got_high, rng);
    const std::size_t got_low = eb.take(lattice_pairs, planted(budget[1]));
    eb.random_fill(low, low, budget[1] - got_low, rng);
    eb.random_fill(high, low, budget[2], rng);
    city.graph = UrbanGraph(Graph::from_edges(n, eb.edges()), Graph(n));
  }

  // OD graph: hub stars plus a long commuting chain for the high class, short
  // links along the lattice for the low class.
  {
    const auto budget = split_budget(cfg.od_edges_target, cfg.od_cross_fraction);
    check(budget);
    const auto n_hubs = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.od_hub_fraction * static_cast<double>(high.size()))));
    std::vector<NodeId> shuffled_high = high;
    rng.shuffle(shuffled_high);
    const std::vector<NodeId> hubs(shuffled_high.begin(), shuffled_high.begin() + static_cast<std::ptrdiff_t>(n_hubs));
    std::vector<std::pair<NodeId, NodeId>> high_pool;
    for (std::size_t a = 0; a + 1 < shuffled_high.size(); ++a) high_pool.emplace_back(shuffled_high[a], shuffled_high[a + 1]);
    std::vector<std::pair<NodeId, NodeId>> star_pairs;
    for (NodeId hub : hubs)
      for (std::size_t a = n_hubs; a < shuffled_high.size(); ++a) star_pairs.emplace_back(hub, shuffled_high[a]);
    rng.shuffle(star_pairs);
    high_pool.insert(high_pool.end(), star_pairs.begin(), star_pairs.end());
    std::vector<std::pair<NodeId, NodeId>> low_pool;
    for (std::size_t off = 1; off < low.size(); ++off)
      for (std::size_t a = 0; a + off < low.size(); ++a) low_pool.emplace_back(low[a], low[a + off]);

    detail::EdgeBuilder eb;
    const std::size_t got_high = eb.take(high_pool, planted(budget[0]));
    eb.random_fill(high, high, budget[0] - got_high, rng);
    const std::size_t got_low = eb.take(low_pool, planted(budget[1]));
    eb.random_fill(low, low, budget[1] - got_low, rng);
    eb.random_fill(high, low, budget[2], rng);
    city.graph = UrbanGraph(city.graph.spatial(), Graph::from_edges(n, eb.edges()));
  }

  // Socioeconomic distributions: tau = (1 - s)/c + s e_k has segregation index exactly s.
  Eigen::MatrixXd socio(static_cast<Eigen::Index>(n), cfg.c);
  for (NodeId i = 0; i < n; ++i) {
    const bool is_high = truth.planted_class[i] == 1;
    const double s = is_high ? rng.uniform(0.55, 0.95) : rng.uniform(0.02, 0.40);
    const auto k = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(cfg.c)));
    socio.row(i).setConstant((1.0 - s) / cfg.c);
    socio(i, k) += s;
    socio.row(i) /= socio.row(i).sum();
  }

  // Features: a +-u class direction plus isotropic Gaussian noise.
  Eigen::RowVectorXd direction(cfg.d_in);
  for (int j = 0; j < cfg.d_in; ++j) direction(j) = rng.bernoulli(0.5) ? 1.0 : -1.0;
  Eigen::MatrixXd features(static_cast<Eigen::Index>(n), cfg.d_in);
  for (NodeId i = 0; i < n; ++i) {
    const double sign = truth.planted_class[i] == 1 ? 1.0 : -1.0;
    for (int j = 0; j < cfg.d_in; ++j)
      features(i, j) = cfg.feature_signal * sign * direction(j) + cfg.feature_noise * rng.normal();
  }
  city.table = NodeTable::build(std::move(features), std::move(socio), 1.0 - static_cast<double>(n_high) / static_cast<double>(n));
  return city;
}

inline void write_ground_truth_csv(const std::string& path, const GroundTruth& t) {
  auto out = detail::open_out(path);
  out << "node_id,planted_class,profile,community\n";
  for (std::size_t i = 0; i < t.planted_class.size(); ++i)
    out << i << ',' << t.planted_class[i] << ',' << t.profile[i] << ',' << t.community[i] << '\n';
}

/// Writes nodes.csv, spatial.csv, od.csv and ground_truth.csv into `dir`.
inline std::vector<std::string> export_city(const SynthCity& city, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::vector<std::string> files = {(dir / "nodes.csv").string(), (dir / "spatial.csv").string(),
                                          (dir / "od.csv").string(), (dir / "ground_truth.csv").string()};
  write_node_csv(files[0], city.table);
  write_edge_csv(files[1], city.graph.spatial());
  write_edge_csv(files[2], city.graph.od());
  write_ground_truth_csv(files[3], city.truth);
  return files;
}

struct IngestReport {
  std::size_t duplicate_spatial = 0;
  std::size_t duplicate_od = 0;
};

struct Dataset {
  UrbanGraph graph;
  NodeTable table;
  IngestReport report;
};

/// Loads the three CSVs, validates them, and derives segregation scores and labels.
inline Dataset ingest(const std::string& node_csv, const std::string& spatial_csv, const std::string& od_csv,
                      double quantile_split = 0.5) {
  for (const auto& p : {node_csv, spatial_csv, od_csv})
    if (!std::filesystem::exists(p)) throw ValidationError("ingest: missing input file " + p);
  RawNodeTable raw = read_node_csv(node_csv);
  Dataset ds;
  ds.table = NodeTable::build(std::move(raw.features), std::move(raw.socio), quantile_split);
  const std::size_t n = ds.table.node_count();
  const auto se = read_edge_csv(spatial_csv);
  const auto oe = read_edge_csv(od_csv);
  ds.graph = UrbanGraph(Graph::from_edges(n, se, &ds.report.duplicate_spatial),
                        Graph::from_edges(n, oe, &ds.report.duplicate_od));
  return ds;
}

inline Dataset ingest_dir(const std::filesystem::path& dir, double quantile_split = 0.5) {
  return ingest((dir / "nodes.csv").string(), (dir / "spatial.csv").string(), (dir / "od.csv").string(),
                quantile_split);
}

}  // namespace motifgpl
