#pragma once

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include "json.hpp"
#include "motifgpl/config.hpp"
#include "motifgpl/error.hpp"
#include "motifgpl/io.hpp"
#include "motifgpl/model_io.hpp"
#include "motifgpl/motif.hpp"
#include "motifgpl/projection.hpp"
#include "motifgpl/reconstruct.hpp"
#include "motifgpl/segregation.hpp"
#include "motifgpl/synth.hpp"
#include "motifgpl/train.hpp"

namespace motifgpl {

namespace fs = std::filesystem;

/// Raised by the pipeline when a stage fails; carries the stage name.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& cause)
      : std::runtime_error("stage '" + stage + "' failed: " + cause), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path);
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 15];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, md, &len);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

/// Column ranges of the three attribute groups inside the feature matrix.
struct FeatureBlocks {
  std::map<std::string, std::pair<Eigen::Index, Eigen::Index>> ranges;

  /// Street-view-like, flow-like and POI-like blocks in 5:1:2 proportion.
  static FeatureBlocks default_for(Eigen::Index d) {
    FeatureBlocks b;
    b.ranges["X_SV"] = {0, 5 * d / 8};
    b.ranges["X_FL"] = {5 * d / 8, 3 * d / 4};
    b.ranges["X_POI"] = {3 * d / 4, d};
    return b;
  }
};

inline const std::vector<std::string>& drop_keys() {
  static const std::vector<std::string> keys = {"G_o", "G_s", "X_SV", "X_FL", "X_POI"};
  return keys;
}

/// Everything one pipeline run needs. Keys in a config file are prefixed by
/// section (`synth.`, `train.`, `reconstruct.`, `census.`); a bare `seed`
/// sets the seed of every stage.
struct PipelineConfig {
  SynthConfig synth;
  TrainConfig train;
  ReconstructConfig recon;
  std::vector<double> betas = {0.3, 0.2, 0.1};
  SignificanceOptions census;
  double quantile_split = 0.5;
  std::uint64_t seed = 0;

  void set_seed(std::uint64_t s) {
    seed = s;
    synth.seed = train.seed = recon.seed = s;
  }

  void apply(const KeyValues& kv) {
    std::map<std::string, KeyValues> sections;
    for (const auto& [key, value] : kv) {
      const auto dot = key.find('.');
      if (dot == std::string::npos) {
        sections[""][key] = value;
      } else {
        sections[key.substr(0, dot)][key.substr(dot + 1)] = value;
      }
    }
    for (const auto& [name, _] : sections)
      if (name != "" && name != "synth" && name != "train" && name != "reconstruct" && name != "census")
        throw ValidationError("unknown config section '" + name + "'");
    {
      ConfigReader r(sections[""]);
      std::uint64_t s = seed;
      r.get("seed", s);
      r.get("quantile_split", quantile_split);
      r.reject_unknown();
      set_seed(s);
    }
    synth.apply(sections["synth"]);
    train.apply(sections["train"]);
    {
      ConfigReader r(sections["reconstruct"]);
      r.get("alpha", recon.alpha);
      std::string betas_text, scope = "high", rule = "cosine", symmetry = "either";
      r.get("betas", betas_text);
      r.get("scope", scope);
      r.get("match", rule);
      r.get("symmetry", symmetry);
      r.get("seed", recon.seed);
      r.reject_unknown();
      if (!betas_text.empty()) betas = parse_list(betas_text);
      recon.scope = parse_scope(scope);
      recon.rule = parse_match_rule(rule);
      recon.symmetry = parse_symmetry(symmetry);
    }
    {
      ConfigReader r(sections["census"]);
      r.get("n_null", census.n_null);
      r.get("p_m", census.p_m);
      r.get("swaps_per_edge", census.swaps_per_edge);
      r.get("workers", census.workers);
      r.reject_unknown();
    }
    validate();
  }

  void validate() const {
    synth.validate();
    train.validate();
    if (betas.empty()) throw ValidationError("reconstruct.betas must not be empty");
    for (double b : betas) {
      ReconstructConfig probe = recon;
      probe.beta = b;
      probe.validate();
    }
    if (census.n_null < 1) throw ValidationError("census.n_null must be >= 1");
    if (!(census.p_m > 0 && census.p_m < 1)) throw ValidationError("census.p_m must lie in (0,1)");
    if (!(quantile_split > 0 && quantile_split < 1)) throw ValidationError("quantile_split must lie in (0,1)");
  }

  std::string to_text() const {
    std::ostringstream o;
    o << "seed=" << seed << "\nquantile_split=" << fmt_double(quantile_split) << "\n";
    o << "synth.n_nodes=" << synth.n_nodes << "\nsynth.spatial_edges_target=" << synth.spatial_edges_target
      << "\nsynth.od_edges_target=" << synth.od_edges_target << "\nsynth.frac_high=" << fmt_double(synth.frac_high)
      << "\nsynth.structure_contrast=" << fmt_double(synth.structure_contrast)
      << "\nsynth.feature_noise=" << fmt_double(synth.feature_noise)
      << "\nsynth.feature_signal=" << fmt_double(synth.feature_signal) << "\nsynth.c=" << synth.c << "\nsynth.d_in=" << synth.d_in
      << "\nsynth.community_size=" << synth.community_size
      << "\nsynth.spatial_cross_fraction=" << fmt_double(synth.spatial_cross_fraction)
      << "\nsynth.od_cross_fraction=" << fmt_double(synth.od_cross_fraction)
      << "\nsynth.od_hub_fraction=" << fmt_double(synth.od_hub_fraction)
      << "\nsynth.seed=" << synth.seed << "\n";
    std::istringstream train_text(train.to_text());
    for (std::string line; std::getline(train_text, line);) o << "train." << line << "\n";
    o << "reconstruct.alpha=" << fmt_double(recon.alpha) << "\nreconstruct.betas=";
    for (std::size_t i = 0; i < betas.size(); ++i) o << (i ? "," : "") << fmt_double(betas[i]);
    o << "\nreconstruct.scope=" << scope_name(recon.scope)
      << "\nreconstruct.match=" << (recon.rule == MatchRule::cosine ? "cosine" : "neg_kl")
      << "\nreconstruct.symmetry=" << (recon.symmetry == SymmetryRule::either ? "either" : "both")
      << "\nreconstruct.seed=" << recon.seed << "\n";
    o << "census.n_null=" << census.n_null << "\ncensus.p_m=" << fmt_double(census.p_m)
      << "\ncensus.swaps_per_edge=" << fmt_double(census.swaps_per_edge) << "\ncensus.workers=" << census.workers << "\n";
    return o.str();
  }

  static std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    for (const auto& cell : split_csv_line(text)) out.push_back(detail::parse_cell<double>(trim(cell), "list"));
    return out;
  }
  static MatchRule parse_match_rule(const std::string& s) {
    if (s == "cosine") return MatchRule::cosine;
    if (s == "neg_kl") return MatchRule::neg_kl;
    throw ValidationError("unknown match rule '" + s + "' (expected cosine or neg_kl)");
  }
  static SymmetryRule parse_symmetry(const std::string& s) {
    if (s == "either") return SymmetryRule::either;
    if (s == "both") return SymmetryRule::both;
    throw ValidationError("unknown symmetry rule '" + s + "' (expected either or both)");
  }
  static const char* scope_name(Scope s) {
    switch (s) {
      case Scope::high: return "high";
      case Scope::low: return "low";
      case Scope::all: return "all";
      case Scope::explicit_nodes: return "file";
    }
    return "high";
  }
};

/// Final projection of a trained model: per view, the projected prototypes and
/// the motif distribution of each prototype's fragment.
struct ProjectionArtifacts {
  std::array<ViewProjection, 2> projections;
  std::array<PrototypeLibrary, 2> libraries;
};

inline constexpr std::uint64_t kFinalProjectionStream = 9001;

inline ProjectionArtifacts project_and_census(const SavedModel& saved, const UrbanGraph& g, const Mat& x,
                                              std::span<const int> labels,
                                              const MotifCatalog& catalog = MotifCatalog()) {
  PrototypeModel model = saved.model;
  const WalkSettings ws{static_cast<std::size_t>(saved.config.walks), static_cast<std::size_t>(saved.config.walk_length)};
  ProjectionArtifacts art;
  art.projections = project_prototypes(model, g, x, saved.train_nodes, labels, ws,
                                       Rng(saved.config.seed, kFinalProjectionStream));
  for (std::size_t k = 0; k < 2; ++k) {
    auto& lib = art.libraries[k];
    for (const auto& pp : art.projections[k].prototypes) {
      lib.class_of.push_back(pp.class_id);
      lib.roots.push_back(pp.root);
      lib.distributions.push_back(census(bundle_to_subgraph(pp.bundle).graph, catalog));
    }
  }
  return art;
}

inline nlohmann::json projection_to_json(const ViewProjection& proj, const PrototypeLibrary& lib, View v,
                                         const MotifCatalog& catalog = MotifCatalog()) {
  nlohmann::json j;
  j["graph"] = to_string(v);
  std::vector<std::string> ids;
  for (const auto& p : catalog.patterns()) ids.push_back(p.id);
  j["patterns"] = ids;
  for (std::size_t i = 0; i < proj.prototypes.size(); ++i) {
    const auto& pp = proj.prototypes[i];
    const Fragment frag = bundle_to_subgraph(pp.bundle);
    std::vector<std::array<NodeId, 2>> edges;
    for (const Edge& e : frag.global_edges()) edges.push_back({e.u, e.v});
    j["prototypes"].push_back({{"prototype", i},
                               {"class", pp.class_id},
                               {"root", pp.root},
                               {"distance", pp.distance},
                               {"walks", pp.bundle.walks},
                               {"fragment_nodes", frag.nodes},
                               {"fragment_edges", edges},
                               {"counts", lib.distributions[i].counts},
                               {"distribution", lib.distributions[i].normalized}});
  }
  return j;
}

/// q x d motif matrix of one view.
inline void write_motif_matrix(const std::string& path, const PrototypeLibrary& lib,
                               const MotifCatalog& catalog = MotifCatalog()) {
  auto out = detail::open_out(path);
  out << "prototype,class,root";
  for (const auto& p : catalog.patterns()) out << ',' << p.id;
  out << '\n';
  for (std::size_t i = 0; i < lib.size(); ++i) {
    out << i << ',' << lib.class_of[i] << ',' << lib.roots[i];
    for (double v : lib.distributions[i].normalized) out << ',' << fmt_double(v);
    out << '\n';
  }
}

inline void write_significance_header(std::ostream& out, bool with_prototype) {
  if (with_prototype) out << "prototype,";
  out << "pattern_id,f_real,f_rand_mean,f_rand_sd,p,is_motif\n";
}

inline void write_significance_rows(std::ostream& out, const SignificanceResult& r, std::optional<std::size_t> proto) {
  for (const auto& ps : r.patterns) {
    if (proto) out << *proto << ',';
    out << ps.id << ',' << fmt_double(ps.f_real) << ',' << fmt_double(ps.f_rand_mean) << ','
        << fmt_double(ps.f_rand_sd) << ',' << fmt_double(ps.empirical_p) << ',' << (ps.is_motif ? 1 : 0) << '\n';
  }
}

inline void write_training_log(const std::string& path, const std::vector<EpochLog>& log) {
  auto out = detail::open_out(path);
  out << "epoch,ce,clst,sprt,enc,val_acc\n";
  for (const auto& e : log)
    out << e.epoch << ',' << fmt_double(e.loss.ce) << ',' << fmt_double(e.loss.clst) << ',' << fmt_double(e.loss.sprt)
        << ',' << fmt_double(e.loss.enc) << ',' << fmt_double(e.val_acc) << '\n';
}

inline void write_reconstruction_header(std::ostream& out) {
  out << "alpha,beta,AEP,REP,UEP,morans_before,morans_after\n";
}

/// `labels_variant` writes Moran's I over the binary labels instead of the scores.
inline void write_reconstruction_row(std::ostream& out, const ReconstructionReport& r, bool labels_variant = false) {
  out << fmt_double(r.alpha) << ',' << fmt_double(r.beta) << ',' << fmt_double(r.aep) << ',' << fmt_double(r.rep)
      << ',' << fmt_double(r.uep) << ','
      << fmt_double(labels_variant ? r.morans_label_before : r.morans_before) << ','
      << fmt_double(labels_variant ? r.morans_label_after : r.morans_after) << '\n';
}

inline void write_seg_report(const std::string& path, const NodeTable& t) {
  auto out = detail::open_out(path);
  out << "node_id,seg_score,seg_label\n";
  for (std::size_t i = 0; i < t.node_count(); ++i)
    out << i << ',' << fmt_double(t.seg_score[i]) << ',' << t.seg_label[i] << '\n';
}

/// One-line Moran's I summary for each layer, over scores and over labels.
inline std::string morans_summary(const UrbanGraph& g, const NodeTable& t) {
  const std::vector<double> labels(t.seg_label.begin(), t.seg_label.end());
  std::ostringstream o;
  o << "morans_i";
  for (View v : kViews)
    o << ' ' << to_string(v) << "_score=" << fmt_double(safe_morans(g.layer(v), t.seg_score)) << ' ' << to_string(v)
      << "_label=" << fmt_double(safe_morans(g.layer(v), labels));
  return o.str();
}

struct TrainOutcome {
  SavedModel saved;
  TrainResult result;
};

inline TrainOutcome train_model(const UrbanGraph& g, const NodeTable& t, const TrainConfig& cfg,
                                const std::function<void(const EpochLog&)>& on_epoch = {}) {
  TrainOutcome out;
  out.result = train({g, t.features, t.seg_label}, cfg, on_epoch);
  out.saved = {cfg, out.result.model, out.result.split.train};
  return out;
}

inline nlohmann::json metrics_json(const TrainResult& r) {
  return {{"val_accuracy", r.val.accuracy},   {"val_macro_f1", r.val.macro_f1}, {"test_accuracy", r.test.accuracy},
          {"test_macro_f1", r.test.macro_f1}, {"epochs", r.log.size()},          {"projections", r.projections}};
}

struct PipelineResult {
  fs::path run_dir;
  std::vector<std::string> outputs;
  TrainResult train;
  ProjectionArtifacts projection;
  std::array<std::vector<ReconstructionReport>, 2> reconstruction;
};

/// Runs data -> train -> project -> census -> reconstruct -> report into
/// `run_dir`. With an empty `data_dir` the data are synthesized from
/// `cfg.synth` and exported into `run_dir/data`. `log`, when set, receives one
/// line per finished stage.
inline PipelineResult run_pipeline(const fs::path& data_dir, const PipelineConfig& cfg, const fs::path& run_dir,
                                   const std::function<void(const std::string&)>& log = {}) {
  cfg.validate();
  using clock = std::chrono::steady_clock;
  PipelineResult res;
  res.run_dir = run_dir;
  nlohmann::json manifest;
  manifest["format"] = "motifgpl-run";
  manifest["version"] = 1;
  manifest["seed"] = cfg.seed;
  manifest["config"] = cfg.to_text();
  std::string current;
  auto stage = [&](const std::string& name, const std::function<void()>& body) {
    current = name;
    const auto t0 = clock::now();
    try {
      body();
    } catch (const ValidationError& e) {
      throw StageError(name, e.what());
    } catch (const StageError&) {
      throw;
    } catch (const std::exception& e) {
      throw StageError(name, e.what());
    }
    const double secs = std::chrono::duration<double>(clock::now() - t0).count();
    manifest["timings"][name] = secs;
    if (log) log(name + " done (" + fmt_double(std::round(secs * 100) / 100) + " s)");
  };
  const auto output = [&](const fs::path& p) {
    res.outputs.push_back(p.string());
    return p.string();
  };

  fs::create_directories(run_dir);
  UrbanGraph graph;
  NodeTable table;
  stage("ingest", [&] {
    fs::path dir = data_dir;
    if (data_dir.empty()) {
      dir = run_dir / "data";
      const SynthCity city = generate(cfg.synth);
      for (const auto& f : export_city(city, dir)) output(f);
      manifest["data"] = "synthesized";
    } else {
      manifest["data"] = data_dir.string();
    }
    for (const char* f : {"nodes.csv", "spatial.csv", "od.csv"}) {
      const fs::path p = dir / f;
      if (!fs::exists(p)) throw ValidationError("missing input file " + p.string());
      manifest["inputs"][p.string()] = sha256_file(p.string());
    }
    Dataset ds = ingest_dir(dir, cfg.quantile_split);
    manifest["duplicate_edges"] = {{"spatial", ds.report.duplicate_spatial}, {"od", ds.report.duplicate_od}};
    graph = std::move(ds.graph);
    table = std::move(ds.table);
  });

  SavedModel saved;
  stage("train", [&] {
    TrainOutcome t = train_model(graph, table, cfg.train);
    saved = std::move(t.saved);
    res.train = std::move(t.result);
    write_training_log(output(run_dir / "train_log.csv"), res.train.log);
    save_model(output(run_dir / "model.json"), saved);
    std::ofstream(output(run_dir / "metrics.json")) << metrics_json(res.train).dump(2) << '\n';
  });

  stage("project", [&] {
    res.projection = project_and_census(saved, graph, table.features, table.seg_label);
    for (View v : kViews) {
      const auto k = view_index(v);
      std::ofstream(output(run_dir / ("projection_" + std::string(to_string(v)) + ".json")))
          << projection_to_json(res.projection.projections[k], res.projection.libraries[k], v).dump(2) << '\n';
      write_motif_matrix(output(run_dir / ("M_" + std::string(to_string(v)) + ".csv")), res.projection.libraries[k]);
    }
  });

  stage("census", [&] {
    for (View v : kViews) {
      const auto k = view_index(v);
      auto out = detail::open_out(output(run_dir / ("prototype_census_" + std::string(to_string(v)) + ".csv")));
      write_significance_header(out, true);
      const auto& protos = res.projection.projections[k].prototypes;
      for (std::size_t i = 0; i < protos.size(); ++i) {
        const Graph frag = bundle_to_subgraph(protos[i].bundle).graph;
        const Rng rng = Rng(cfg.seed, 20 + k).split(i);
        write_significance_rows(out, significance(frag, cfg.census, rng), i);
      }
    }
  });

  stage("reconstruct", [&] {
    for (View v : kViews) {
      const auto k = view_index(v);
      const auto plan = plan_reconstruction(graph, v, res.projection.libraries[k], table.seg_label, cfg.recon);
      auto out = detail::open_out(output(run_dir / ("reconstruct_" + std::string(to_string(v)) + ".csv")));
      auto out_labels =
          detail::open_out(output(run_dir / ("reconstruct_" + std::string(to_string(v)) + "_labels.csv")));
      write_reconstruction_header(out);
      write_reconstruction_header(out_labels);
      for (double beta : cfg.betas) {
        const auto r = apply_plan(graph, plan, cfg.recon.alpha, beta, cfg.recon.symmetry, table.seg_score,
                                  table.seg_label);
        write_reconstruction_row(out, r.report);
        write_reconstruction_row(out_labels, r.report, true);
        write_edge_csv(output(run_dir / ("reconstructed_" + std::string(to_string(v)) + "_beta" + fmt_double(beta) +
                                         ".csv")),
                       r.graph.layer(v));
        res.reconstruction[k].push_back(r.report);
      }
    }
  });

  stage("report", [&] {
    write_seg_report(output(run_dir / "report.csv"), table);
    std::ofstream(output(run_dir / "report.txt")) << morans_summary(graph, table) << '\n';
  });

  for (const auto& f : res.outputs) manifest["outputs"][fs::relative(f, run_dir).string()] = sha256_file(f);
  std::ofstream(run_dir / "manifest.json") << manifest.dump(2) << '\n';
  res.outputs.push_back((run_dir / "manifest.json").string());
  return res;
}

/// Recomputes every output digest listed in a manifest; returns the files that differ.
inline std::vector<std::string> verify_manifest(const fs::path& run_dir) {
  std::ifstream in(run_dir / "manifest.json");
  if (!in) throw ValidationError("no manifest.json in " + run_dir.string());
  nlohmann::json m;
  in >> m;
  std::vector<std::string> bad;
  for (const auto& [rel, digest] : m.at("outputs").items()) {
    const fs::path p = run_dir / rel;
    if (!fs::exists(p) || sha256_file(p.string()) != digest.get<std::string>()) bad.push_back(rel);
  }
  return bad;
}

/// Config snapshot stored in a run manifest.
inline PipelineConfig config_from_manifest(const fs::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError("cannot open manifest " + manifest_path.string());
  nlohmann::json m;
  try {
    in >> m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }
  std::istringstream text(m.at("config").get<std::string>());
  PipelineConfig cfg;
  cfg.apply(parse_key_values(text, manifest_path.string()));
  return cfg;
}

struct AblationRow {
  std::string variant;
  ClassificationMetrics val;
  ClassificationMetrics test;
};

/// Inputs with the named graph layers replaced by edgeless graphs and the
/// named feature blocks zeroed.
inline std::pair<UrbanGraph, NodeTable> drop_inputs(const UrbanGraph& g, const NodeTable& t,
                                                    const std::vector<std::string>& drops, const FeatureBlocks& blocks) {
  UrbanGraph g2 = g;
  NodeTable t2 = t;
  bool graphs_left = true;
  std::vector<bool> zeroed(static_cast<std::size_t>(t.feature_dim()), false);
  for (const auto& d : drops) {
    if (d == "G_o") {
      g2 = g2.with_layer(View::od, Graph(g.node_count()));
    } else if (d == "G_s") {
      g2 = g2.with_layer(View::spatial, Graph(g.node_count()));
    } else if (auto it = blocks.ranges.find(d); it != blocks.ranges.end()) {
      const auto [b, e] = it->second;
      if (b < 0 || e > t.features.cols() || b > e) throw ValidationError("feature block " + d + " outside feature range");
      t2.features.middleCols(b, e - b).setZero();
      for (auto c = b; c < e; ++c) zeroed[static_cast<std::size_t>(c)] = true;
    } else {
      throw ValidationError("unknown drop key '" + d + "' (expected G_o, G_s, X_SV, X_FL or X_POI)");
    }
  }
  graphs_left = g2.spatial().edge_count() + g2.od().edge_count() > 0;
  const bool features_left = std::find(zeroed.begin(), zeroed.end(), false) != zeroed.end();
  if (!graphs_left && !features_left) throw ValidationError("ablation drops every graph and every feature");
  return {std::move(g2), std::move(t2)};
}

/// Retrains once per variant; the first row is always the full model.
inline std::vector<AblationRow> ablate(const UrbanGraph& g, const NodeTable& t, const TrainConfig& cfg,
                                       const std::vector<std::vector<std::string>>& variants,
                                       const FeatureBlocks& blocks) {
  // Validate every variant before spending time on training.
  for (const auto& v : variants) drop_inputs(g, t, v, blocks);
  std::vector<AblationRow> rows;
  auto run = [&](const std::string& name, const UrbanGraph& gg, const NodeTable& tt) {
    const auto r = train({gg, tt.features, t.seg_label}, cfg);
    rows.push_back({name, r.val, r.test});
  };
  run("full", g, t);
  for (const auto& v : variants) {
    if (v.empty()) continue;
    std::string name = "w/o";
    for (const auto& d : v) name += " " + d;
    const auto [gg, tt] = drop_inputs(g, t, v, blocks);
    run(name, gg, tt);
  }
  return rows;
}

}  // namespace motifgpl
