// Command-line front end: one subcommand per pipeline stage plus `pipeline`
// (all stages) and `ablate`.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "motifgpl/pipeline.hpp"

namespace fs = std::filesystem;
using namespace motifgpl;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitStage = 3;

std::vector<NodeId> read_node_list(const std::string& path) {
  auto in = detail::open_in(path);
  std::vector<NodeId> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line == "node_id") continue;
    out.push_back(detail::parse_cell<NodeId>(split_csv_line(line)[0], path + ":" + std::to_string(lineno)));
  }
  return out;
}

PipelineConfig load_pipeline_config(const std::string& path) {
  PipelineConfig cfg;
  if (!path.empty()) cfg.apply(read_key_values(path));
  return cfg;
}

TrainConfig load_train_config(const std::string& path) {
  TrainConfig cfg;
  if (!path.empty()) cfg.apply(read_key_values(path));
  return cfg;
}

std::ostream& open_or_stdout(const std::string& path, std::ofstream& file) {
  if (path.empty() || path == "-") return std::cout;
  file = detail::open_out(path);
  return file;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"motif-guided prototype learning on dual urban graphs"};
  app.require_subcommand(0, 1);
  bool print_config = false;
  app.add_flag("--print-config", print_config, "print every configuration key with its default and exit");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a planted synthetic city");
  SynthConfig synth_cfg;
  std::string synth_out;
  std::optional<std::size_t> synth_n;
  synth->add_option("--n", synth_n, "node count (edge targets scale with it)");
  synth->add_option("--contrast", synth_cfg.structure_contrast, "structure contrast in [0,1]");
  synth->add_option("--noise", synth_cfg.feature_noise, "feature noise");
  synth->add_option("--seed", synth_cfg.seed, "seed");
  synth->add_option("--out-dir", synth_out, "output directory")->required();

  // shared data location
  std::string data_dir;
  auto add_data = [&](CLI::App* sub) {
    sub->add_option("--data", data_dir, "directory with nodes.csv, spatial.csv, od.csv")->required();
  };

  // census
  auto* census_cmd = app.add_subcommand("census", "motif census and significance of a graph or node subset");
  add_data(census_cmd);
  std::string census_graph = "spatial", census_nodes = "all", census_out;
  SignificanceOptions sig;
  std::uint64_t census_seed = 0;
  census_cmd->add_option("--graph", census_graph, "spatial|od");
  census_cmd->add_option("--nodes", census_nodes, "file with node ids, or 'all'");
  census_cmd->add_option("--null", sig.n_null, "number of null graphs");
  census_cmd->add_option("--pm", sig.p_m, "probability threshold");
  census_cmd->add_option("--seed", census_seed, "seed");
  census_cmd->add_option("--workers", sig.workers, "threads for null replicas");
  census_cmd->add_option("--out", census_out, "output CSV (default stdout)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train the prototype model");
  add_data(train_cmd);
  std::string train_config, model_out, train_log;
  train_cmd->add_option("--config", train_config, "key=value training config");
  train_cmd->add_option("--out", model_out, "model file (JSON)")->required();
  train_cmd->add_option("--log", train_log, "training log CSV");

  // project
  auto* project_cmd = app.add_subcommand("project", "project prototypes and report their motif distributions");
  add_data(project_cmd);
  std::string model_in, project_graph = "spatial", project_out;
  project_cmd->add_option("--model", model_in, "model file")->required();
  project_cmd->add_option("--graph", project_graph, "spatial|od");
  project_cmd->add_option("--out", project_out, "prototype report JSON")->required();

  // reconstruct
  auto* recon_cmd = app.add_subcommand("reconstruct", "motif-guided graph reconstruction");
  add_data(recon_cmd);
  ReconstructConfig rc;
  std::string recon_graph = "spatial", recon_scope = "high", recon_target = "auto", recon_sweep, recon_out,
              recon_match = "cosine", recon_symmetry = "either", recon_graph_out;
  std::optional<double> recon_beta;
  recon_cmd->add_option("--model", model_in, "model file")->required();
  recon_cmd->add_option("--graph", recon_graph, "spatial|od");
  recon_cmd->add_option("--alpha", rc.alpha, "reconstruction weight factor");
  recon_cmd->add_option("--beta", recon_beta, "edge creation threshold");
  recon_cmd->add_option("--scope", recon_scope, "high|low|all|<node file>");
  recon_cmd->add_option("--target", recon_target, "auto|<node>");
  recon_cmd->add_option("--sweep", recon_sweep, "comma-separated betas, e.g. 0.3,0.2,0.1");
  recon_cmd->add_option("--match", recon_match, "cosine|neg_kl");
  recon_cmd->add_option("--symmetry", recon_symmetry, "either|both");
  recon_cmd->add_option("--seed", rc.seed, "seed for local walks");
  recon_cmd->add_option("--out", recon_out, "output CSV (default stdout)");
  recon_cmd->add_option("--graph-out", recon_graph_out, "edge CSV of the graph at the last beta");

  // report
  auto* report_cmd = app.add_subcommand("report", "segregation scores, labels and Moran's I");
  add_data(report_cmd);
  std::string report_out;
  report_cmd->add_option("--out", report_out, "output CSV (default stdout)");

  // pipeline
  auto* pipe_cmd = app.add_subcommand("pipeline", "run every stage and write a run directory");
  std::string pipe_data, pipe_config, pipe_manifest, pipe_out;
  pipe_cmd->add_option("--data", pipe_data, "input directory (omit to synthesize)");
  pipe_cmd->add_option("--config", pipe_config, "key=value pipeline config");
  pipe_cmd->add_option("--from-manifest", pipe_manifest, "reuse the config of an earlier run");
  pipe_cmd->add_option("--out-dir", pipe_out, "run directory")->required();

  // ablate
  auto* ablate_cmd = app.add_subcommand("ablate", "retrain with inputs removed");
  add_data(ablate_cmd);
  std::vector<std::string> drops;
  std::string ablate_out;
  ablate_cmd->add_option("--config", train_config, "key=value training config");
  ablate_cmd->add_option("--drop", drops, "G_o, G_s, X_SV, X_FL, X_POI; '+' joins keys into one variant");
  ablate_cmd->add_option("--out", ablate_out, "output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc_parse = app.exit(e);
    return rc_parse == 0 ? 0 : kExitValidation;
  }

  try {
    if (print_config) {
      std::cout << PipelineConfig().to_text();
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cout << app.help();
      return 0;
    }

    if (*synth) {
      if (synth_n) {
        SynthConfig scaled = SynthConfig{}.scaled_to(*synth_n);
        scaled.structure_contrast = synth_cfg.structure_contrast;
        scaled.feature_noise = synth_cfg.feature_noise;
        scaled.seed = synth_cfg.seed;
        synth_cfg = scaled;
      }
      const SynthCity city = generate(synth_cfg);
      for (const auto& f : export_city(city, synth_out)) std::cout << f << '\n';
    } else if (*census_cmd) {
      const Dataset ds = ingest_dir(data_dir);
      const View v = parse_view(census_graph);
      Graph g = ds.graph.layer(v);
      if (census_nodes != "all") {
        const auto nodes = read_node_list(census_nodes);
        for (NodeId n : nodes)
          if (n >= g.node_count()) throw ValidationError("node " + std::to_string(n) + " outside graph");
        g = g.induced(nodes);
      }
      std::ofstream file;
      auto& out = open_or_stdout(census_out, file);
      write_significance_header(out, false);
      write_significance_rows(out, significance(g, sig, Rng(census_seed, 0)), std::nullopt);
    } else if (*train_cmd) {
      const Dataset ds = ingest_dir(data_dir);
      const TrainConfig cfg = load_train_config(train_config);
      const TrainOutcome t = train_model(ds.graph, ds.table, cfg);
      save_model(model_out, t.saved);
      if (!train_log.empty()) write_training_log(train_log, t.result.log);
      std::cout << metrics_json(t.result).dump() << '\n';
    } else if (*project_cmd) {
      const Dataset ds = ingest_dir(data_dir);
      const SavedModel saved = load_model(model_in);
      const View v = parse_view(project_graph);
      const auto art = project_and_census(saved, ds.graph, ds.table.features, ds.table.seg_label);
      const auto k = view_index(v);
      std::ofstream(project_out) << projection_to_json(art.projections[k], art.libraries[k], v).dump(2) << '\n';
    } else if (*recon_cmd) {
      const Dataset ds = ingest_dir(data_dir);
      const SavedModel saved = load_model(model_in);
      const View v = parse_view(recon_graph);
      rc.rule = PipelineConfig::parse_match_rule(recon_match);
      rc.symmetry = PipelineConfig::parse_symmetry(recon_symmetry);
      if (recon_scope == "high" || recon_scope == "low" || recon_scope == "all") {
        rc.scope = parse_scope(recon_scope);
      } else {
        rc.scope = Scope::explicit_nodes;
        rc.scope_nodes = read_node_list(recon_scope);
      }
      if (recon_target != "auto") rc.target = detail::parse_cell<NodeId>(recon_target, "--target");
      std::vector<double> betas = recon_sweep.empty() ? std::vector<double>{recon_beta.value_or(rc.beta)}
                                                      : PipelineConfig::parse_list(recon_sweep);
      rc.beta = betas.front();
      for (double b : betas) {
        ReconstructConfig probe = rc;
        probe.beta = b;
        probe.validate();
      }
      const auto art = project_and_census(saved, ds.graph, ds.table.features, ds.table.seg_label);
      const auto plan = plan_reconstruction(ds.graph, v, art.libraries[view_index(v)], ds.table.seg_label, rc);
      if (plan.empty_inputs > 0)
        std::cerr << "warning: " << plan.empty_inputs
                  << " node(s) had no motif occurrences and were matched as smoothed-uniform\n";
      std::ofstream file;
      auto& out = open_or_stdout(recon_out, file);
      write_reconstruction_header(out);
      for (double b : betas) {
        const auto r = apply_plan(ds.graph, plan, rc.alpha, b, rc.symmetry, ds.table.seg_score, ds.table.seg_label);
        write_reconstruction_row(out, r.report);
        if (b == betas.back() && !recon_graph_out.empty()) write_edge_csv(recon_graph_out, r.graph.layer(v));
      }
    } else if (*report_cmd) {
      const Dataset ds = ingest_dir(data_dir);
      if (ds.report.duplicate_spatial + ds.report.duplicate_od > 0)
        std::cerr << "warning: dropped " << ds.report.duplicate_spatial << " duplicate spatial and "
                  << ds.report.duplicate_od << " duplicate OD edge rows\n";
      if (report_out.empty() || report_out == "-") {
        std::cout << "node_id,seg_score,seg_label\n";
        for (std::size_t i = 0; i < ds.table.node_count(); ++i)
          std::cout << i << ',' << fmt_double(ds.table.seg_score[i]) << ',' << ds.table.seg_label[i] << '\n';
        std::cerr << morans_summary(ds.graph, ds.table) << '\n';
      } else {
        write_seg_report(report_out, ds.table);
        std::cout << morans_summary(ds.graph, ds.table) << '\n';
      }
    } else if (*pipe_cmd) {
      PipelineConfig cfg = pipe_manifest.empty() ? load_pipeline_config(pipe_config) : config_from_manifest(pipe_manifest);
      const auto res = run_pipeline(pipe_data, cfg, pipe_out, [](const std::string& line) { std::cerr << line << '\n'; });
      std::cout << (fs::path(pipe_out) / "manifest.json").string() << '\n';
      (void)res;
    } else if (*ablate_cmd) {
      const Dataset ds = ingest_dir(data_dir);
      const TrainConfig cfg = load_train_config(train_config);
      std::vector<std::vector<std::string>> variants;
      for (const auto& d : drops) {
        std::vector<std::string> keys;
        std::stringstream ss(d);
        for (std::string key; std::getline(ss, key, '+');) keys.push_back(trim(key));
        variants.push_back(keys);
      }
      const auto rows = ablate(ds.graph, ds.table, cfg, variants, FeatureBlocks::default_for(ds.table.features.cols()));
      std::ofstream file;
      auto& out = open_or_stdout(ablate_out, file);
      out << "variant,val_accuracy,val_macro_f1,test_accuracy,test_macro_f1\n";
      for (const auto& r : rows)
        out << r.variant << ',' << fmt_double(r.val.accuracy) << ',' << fmt_double(r.val.macro_f1) << ','
            << fmt_double(r.test.accuracy) << ',' << fmt_double(r.test.macro_f1) << '\n';
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitStage;
  }
  return 0;
}
