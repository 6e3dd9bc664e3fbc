#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "motifgpl/pipeline.hpp"

using namespace motifgpl;
namespace fs = std::filesystem;

namespace {

const char* kSmallConfig =
    "seed=4\n"
    "synth.n_nodes=60\nsynth.spatial_edges_target=130\nsynth.od_edges_target=300\n"
    "synth.d_in=16\nsynth.community_size=6\n"
    "train.max_epochs=20\ntrain.projection_interval=10\ntrain.latent_dim=16\ntrain.hidden_dim=8\n"
    "train.rnn_hidden=8\ntrain.n_proto=2\ntrain.walks=4\ntrain.walk_length=4\ntrain.enc_candidates=4\n"
    "census.n_null=20\n";

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("motifgpl_pipeline_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

PipelineConfig small_config() {
  std::istringstream in(kSmallConfig);
  PipelineConfig cfg;
  cfg.apply(parse_key_values(in));
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct CliResult {
  int code;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args, const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / "motifgpl_cli_capture";
  fs::create_directories(dir);
  const fs::path out = dir / (tag + ".out"), err = dir / (tag + ".err");
  const std::string cmd = std::string(MOTIFGPL_CLI) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

}  // namespace

TEST(PipelineConfig, TextRoundTrip) {
  const PipelineConfig cfg = small_config();
  std::istringstream in(cfg.to_text());
  PipelineConfig again;
  again.apply(parse_key_values(in));
  EXPECT_EQ(again.to_text(), cfg.to_text());
  EXPECT_EQ(again.train.seed, 4u);
  EXPECT_EQ(again.synth.seed, 4u);
}

TEST(PipelineConfig, RejectsUnknownKeysAndSections) {
  PipelineConfig cfg;
  EXPECT_THROW(cfg.apply({{"mystery.key", "1"}}), ValidationError);
  EXPECT_THROW(cfg.apply({{"train.nope", "1"}}), ValidationError);
  EXPECT_THROW(cfg.apply({{"reconstruct.betas", "0.3,1.5"}}), ValidationError);
  EXPECT_THROW(cfg.apply({{"train.lr", "fast"}}), ValidationError);
}

TEST(ModelIo, SaveLoadRoundTrip) {
  const PipelineConfig cfg = small_config();
  const SynthCity city = generate(cfg.synth);
  TrainConfig tc = cfg.train;
  tc.max_epochs = 3;
  const TrainOutcome t = train_model(city.graph, city.table, tc);
  const fs::path dir = fresh_dir("model");
  save_model((dir / "m.json").string(), t.saved);
  const SavedModel back = load_model((dir / "m.json").string());
  EXPECT_EQ(back.train_nodes, t.saved.train_nodes);
  EXPECT_EQ(back.config.to_text(), t.saved.config.to_text());
  const auto a = back.model.tensors(), b = t.saved.model.tensors();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i].second, *b[i].second) << a[i].first;
  for (std::size_t k = 0; k < 2; ++k) EXPECT_EQ(back.model.views[k].protos.roots, t.saved.model.views[k].protos.roots);
}

TEST(Pipeline, WritesArtifactsAndVerifiableManifest) {
  const fs::path run = fresh_dir("run_a");
  const PipelineConfig cfg = small_config();
  const auto res = run_pipeline({}, cfg, run);
  for (const char* f : {"M_spatial.csv", "M_od.csv", "model.json", "train_log.csv", "report.csv", "report.txt",
                        "reconstruct_spatial.csv", "prototype_census_od.csv", "projection_spatial.json",
                        "manifest.json"})
    EXPECT_TRUE(fs::exists(run / f)) << f;
  EXPECT_TRUE(verify_manifest(run).empty());

  std::ifstream m(run / "M_spatial.csv");
  std::string line;
  std::getline(m, line);
  EXPECT_EQ(line, "prototype,class,root,M3,1,M3,2,M4,1,M4,2,M4,3,M4,4,M4,5,M4,6,M5,1");
  int rows = 0;
  while (std::getline(m, line)) ++rows;
  EXPECT_EQ(rows, 2 * cfg.train.n_proto);
  EXPECT_EQ(res.reconstruction[0].size(), cfg.betas.size());

  // Tampering is detected.
  std::ofstream(run / "report.txt", std::ios::app) << "x";
  EXPECT_EQ(verify_manifest(run), std::vector<std::string>{"report.txt"});
}

TEST(Pipeline, SameConfigGivesIdenticalOutputs) {
  const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
  run_pipeline({}, small_config(), a);
  run_pipeline({}, config_from_manifest(a / "manifest.json"), b);
  for (const char* f : {"M_spatial.csv", "M_od.csv", "report.csv", "report.txt", "reconstruct_spatial.csv",
                        "reconstruct_od.csv", "prototype_census_spatial.csv", "model.json"})
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
}

TEST(Pipeline, MissingOdFileAbortsInIngest) {
  const PipelineConfig cfg = small_config();
  const fs::path data = fresh_dir("data_no_od");
  export_city(generate(cfg.synth), data);
  fs::remove(data / "od.csv");
  try {
    run_pipeline(data, cfg, fresh_dir("run_no_od"));
    FAIL() << "expected a stage error";
  } catch (const StageError& e) {
    EXPECT_EQ(e.stage(), "ingest");
  }
}

TEST(Ablation, DropNothingMatchesTrain) {
  const PipelineConfig cfg = small_config();
  const SynthCity city = generate(cfg.synth);
  const auto rows = ablate(city.graph, city.table, cfg.train, {{}}, FeatureBlocks::default_for(16));
  ASSERT_EQ(rows.size(), 1u);
  const TrainOutcome t = train_model(city.graph, city.table, cfg.train);
  EXPECT_EQ(rows[0].variant, "full");
  EXPECT_EQ(rows[0].test.accuracy, t.result.test.accuracy);
  EXPECT_EQ(rows[0].test.macro_f1, t.result.test.macro_f1);
  EXPECT_EQ(rows[0].val.accuracy, t.result.val.accuracy);
}

TEST(Ablation, DropInputsAndRejections) {
  const PipelineConfig cfg = small_config();
  const SynthCity city = generate(cfg.synth);
  const auto blocks = FeatureBlocks::default_for(16);
  const auto [g, t] = drop_inputs(city.graph, city.table, {"G_s", "X_FL"}, blocks);
  EXPECT_EQ(g.spatial().edge_count(), 0u);
  EXPECT_EQ(g.od(), city.graph.od());
  EXPECT_TRUE(t.features.middleCols(10, 2).isZero());
  EXPECT_EQ(t.features.leftCols(10), city.table.features.leftCols(10));
  EXPECT_THROW(drop_inputs(city.graph, city.table, {"X_RAIN"}, blocks), ValidationError);
  EXPECT_THROW(drop_inputs(city.graph, city.table, drop_keys(), blocks), ValidationError);
  EXPECT_THROW(ablate(city.graph, city.table, cfg.train, {{"G_o"}, {"bogus"}}, blocks), ValidationError);
}

TEST(Cli, PrintConfigListsDefaults) {
  const auto r = run_cli("--print-config", "print");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("train.lr=0.001"), std::string::npos);
  EXPECT_NE(r.out.find("reconstruct.betas=0.3,0.2,0.1"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("synth", "no_out").code, 2);
  EXPECT_EQ(run_cli("report --data /nonexistent/dir", "no_data").code, 2);
  const fs::path data = fresh_dir("cli_data");
  const auto s = run_cli("synth --n 60 --seed 1 --out-dir " + data.string(), "synth");
  ASSERT_EQ(s.code, 0) << s.err;
  const auto rep = run_cli("report --data " + data.string(), "report");
  EXPECT_EQ(rep.code, 0) << rep.err;
  EXPECT_NE(rep.out.find("node_id,seg_score,seg_label"), std::string::npos);
  EXPECT_EQ(run_cli("ablate --data " + data.string() + " --drop G_o+G_s+X_SV+X_FL+X_POI", "drop_all").code, 2);
  EXPECT_EQ(run_cli("ablate --data " + data.string() + " --drop X_RAIN", "drop_bad").code, 2);
  const auto census = run_cli("census --data " + data.string() + " --null 5", "census");
  EXPECT_EQ(census.code, 0) << census.err;
  EXPECT_NE(census.out.find("M3,2,"), std::string::npos);

  fs::remove(data / "od.csv");
  const fs::path cfg = fresh_dir("cli_cfg") / "small.cfg";
  std::ofstream(cfg) << kSmallConfig;
  const auto p = run_cli("pipeline --data " + data.string() + " --config " + cfg.string() + " --out-dir " +
                             fresh_dir("cli_run").string(),
                         "pipeline_no_od");
  EXPECT_EQ(p.code, 3);
  EXPECT_NE(p.err.find("ingest"), std::string::npos) << p.err;
}
