#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "sfa/cost.hpp"
#include "sfa/harness.hpp"
#include "sfa/metrics_io.hpp"
#include "test_helpers.hpp"

using namespace sfa;
using test::PrecisionGuard;

namespace fs = std::filesystem;

namespace {

// Small-but-real dimensions so harness runs finish in well under a second per
// epoch.
const char* kTinyConfig =
    "model.image_size = 16\n"
    "model.patch_size = 8\n"
    "model.hidden = 32\n"
    "model.heads = 4\n"
    "model.spatial_depth = 1\n"
    "model.temporal_depth = 1\n"
    "model.mlp_dim = 64\n"
    "model.adapter_hidden = 32\n"
    "data.classes = 4\n"
    "data.seed = 11\n"
    "data.clips_per_class_train = 8\n"
    "data.clips_per_class_eval = 4\n"
    "data.source_frames = 16\n"
    "data.sprite_size = 5\n"
    "data.noise_std = 0.05\n"
    "train.local_batch = 8\n"
    "train.base_lr = 0.05\n"
    "train.warmup_epochs = 0.5\n";

HarnessSetup tiny_setup(const std::string& extra = "") {
  ConfigMap file = ConfigMap::parse_text(std::string(kTinyConfig) + extra);
  return resolve_setup(file, CliOverrides{});
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

size_t line_count(const std::string& text) {
  size_t n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(SFA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("resolve_setup applies file values, defaults, and cross-links") {
  const HarnessSetup s = tiny_setup();
  CHECK(s.model.hidden == 32);
  CHECK(s.model.num_classes == 4);     // follows data.classes
  CHECK(s.data.image_size == 16);      // follows model.image_size
  CHECK(s.data.num_classes == 4);
  CHECK(s.train.base_lr == doctest::Approx(0.05));
  CHECK(s.seed == 0);
  CHECK(s.frames == 8);
  CHECK(s.stage == 1);
  CHECK(s.epochs == -1);
  CHECK(s.precision == Precision::f32);
  CHECK(s.head == HeadPolicy::copy);
  CHECK(s.sweep_sources == std::vector<int>{2, 4, 8});
  CHECK(s.cost_models == std::vector<std::string>{"B", "L", "H", "g"});
}

TEST_CASE("resolve_setup lets flags override file values") {
  ConfigMap file = ConfigMap::parse_text(std::string(kTinyConfig) +
                                         "run.seed = 3\nrun.frames = 4\nrun.out = from_file\n");
  CliOverrides cli;
  cli.seed = 7;
  cli.out = "from_cli";
  const HarnessSetup s = resolve_setup(file, cli);
  CHECK(s.seed == 7);
  CHECK(s.frames == 4);  // file value survives where no flag is given
  CHECK(s.out_dir == "from_cli");
}

TEST_CASE("resolve_setup rejects bad input as config errors") {
  CHECK_THROWS_AS(resolve_setup(ConfigMap::parse_text("model.hiden = 3\n"), CliOverrides{}),
                  ConfigError);
  CHECK_THROWS_WITH_AS(
      resolve_setup(ConfigMap::parse_text("run.frames = 0\n"), CliOverrides{}),
      doctest::Contains("frame count"), ConfigError);
  {
    CliOverrides cli;
    cli.frames = 0;
    CHECK_THROWS_AS(resolve_setup(ConfigMap{}, cli), ConfigError);
  }
  CHECK_THROWS_AS(resolve_setup(ConfigMap::parse_text("run.stage = 3\n"), CliOverrides{}),
                  ConfigError);
  // stage 2 needs a source checkpoint
  CHECK_THROWS_AS(resolve_setup(ConfigMap::parse_text("run.stage = 2\n"), CliOverrides{}),
                  ConfigError);
  CHECK_THROWS_AS(resolve_setup(ConfigMap::parse_text("run.precision = f16\n"), CliOverrides{}),
                  ConfigError);
  CHECK_THROWS_AS(resolve_setup(ConfigMap::parse_text("run.head = drop\n"), CliOverrides{}),
                  ConfigError);
  CHECK_THROWS_AS(resolve_setup(ConfigMap::parse_text("train.epochs = -2\n"), CliOverrides{}),
                  ConfigError);
  CHECK_THROWS_AS(
      resolve_setup(ConfigMap::parse_text("preset.sweep_sources = 2,x\n"), CliOverrides{}),
      ConfigError);
  CHECK_THROWS_AS(
      resolve_setup(ConfigMap::parse_text("model.patch_size = 5\n"), CliOverrides{}),
      ConfigError);  // structural validation surfaces as ConfigError
}

TEST_CASE("serialized setup is canonical across value sources") {
  ConfigMap file = ConfigMap::parse_text("run.seed = 5\nrun.frames = 4\n");
  const HarnessSetup from_file = resolve_setup(file, CliOverrides{});
  CliOverrides cli;
  cli.seed = 5;
  cli.frames = 4;
  const HarnessSetup from_cli = resolve_setup(ConfigMap{}, cli);
  CHECK(serialize_setup(from_file) == serialize_setup(from_cli));
  CHECK(fnv1a64(serialize_setup(from_file)) == fnv1a64(serialize_setup(from_cli)));

  // the rendering itself parses back with only known keys
  const ConfigMap round = ConfigMap::parse_text(serialize_setup(from_file));
  CHECK(round.get_int("run.seed", -1) == 5);
  CHECK(round.get_int("run.frames", -1) == 4);
  CHECK_NOTHROW(resolve_setup(round, CliOverrides{}));
}

TEST_CASE("single_run writes the full artifact set with matching metrics") {
  PrecisionGuard guard(Precision::f32);
  const fs::path dir = fresh_dir("sfa_hr_single");
  HarnessSetup s = tiny_setup("run.frames = 4\nrun.epochs = 2\n");
  s.out_dir = dir.string();

  const SingleRunResult result = preset_single_run(s);
  const RunMetrics& m = result.pipeline.stages.front().metrics;
  CHECK(m.steps.size() == 8);  // 32 clips / batch 8 * 2 epochs
  CHECK(m.evals.size() == 2);

  for (const char* name : {"resolved.cfg", "steps.csv", "evals.csv", "steps.jsonl",
                           "evals.jsonl", "model.ckpt", "manifest.txt"})
    CHECK(fs::exists(dir / name));

  const CsvTable steps = read_csv((dir / "steps.csv").string());
  CHECK(steps.columns == std::vector<std::string>{"step", "loss", "lr"});
  CHECK(steps.rows.size() == m.steps.size());
  CHECK(steps.rows[3][0] == 3.0);
  CHECK(steps.rows[3][1] == doctest::Approx(m.steps[3].loss).epsilon(1e-5));

  const CsvTable evals = read_csv((dir / "evals.csv").string());
  CHECK(evals.columns == std::vector<std::string>{"epoch", "top1", "top5", "wall_seconds"});
  CHECK(evals.rows.size() == 2);

  // json-lines mirror: same row count, same field names
  const std::string jsonl = slurp(dir / "steps.jsonl");
  CHECK(line_count(jsonl) == steps.rows.size());
  CHECK(jsonl.find("\"step\":") != std::string::npos);
  CHECK(jsonl.find("\"loss\":") != std::string::npos);
  CHECK(line_count(slurp(dir / "evals.jsonl")) == evals.rows.size());

  const Checkpoint ck = load_checkpoint_file((dir / "model.ckpt").string());
  CHECK(ck.meta.stage == "stage1");
  CHECK(ck.meta.mode == Mode::baseline);
  CHECK(ck.meta.epoch == 2);
  CHECK(ck.meta.config.num_frames == 4);
  CHECK_FALSE(ck.store.has_group("adapter"));

  const std::string manifest = slurp(dir / "manifest.txt");
  CHECK(manifest.find("config_hash = ") != std::string::npos);
  CHECK(manifest.find("seed = 0") != std::string::npos);
  for (const std::string& name : result.artifacts)
    CHECK(manifest.find("artifact = " + name) != std::string::npos);
  CHECK(manifest.find("model.ckpt") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("single_run is deterministic: equal seeds give identical bytes and values") {
  PrecisionGuard guard(Precision::f32);
  HarnessSetup s = tiny_setup("run.frames = 4\nrun.epochs = 1\nrun.seed = 21\n");
  const fs::path a = fresh_dir("sfa_hr_det_a");
  const fs::path b = fresh_dir("sfa_hr_det_b");

  s.out_dir = a.string();
  preset_single_run(s);
  s.out_dir = b.string();
  preset_single_run(s);

  CHECK(slurp(a / "model.ckpt") == slurp(b / "model.ckpt"));
  CHECK(slurp(a / "steps.csv") == slurp(b / "steps.csv"));
  // eval rows match outside the wall-time column
  const CsvTable ea = read_csv((a / "evals.csv").string());
  const CsvTable eb = read_csv((b / "evals.csv").string());
  REQUIRE(ea.rows.size() == eb.rows.size());
  for (size_t i = 0; i < ea.rows.size(); ++i)
    for (size_t c = 0; c < 3; ++c)  // epoch, top1, top5
      CHECK(ea.rows[i][c] == eb.rows[i][c]);

  HarnessSetup other = s;
  other.seed = 22;
  const fs::path c = fresh_dir("sfa_hr_det_c");
  other.out_dir = c.string();
  preset_single_run(other);
  CHECK(slurp(a / "model.ckpt") != slurp(c / "model.ckpt"));
  fs::remove_all(a);
  fs::remove_all(b);
  fs::remove_all(c);
}

TEST_CASE("single_run stage 2 applies the transfer layout from a stage-1 checkpoint") {
  PrecisionGuard guard(Precision::f32);
  const fs::path dir = fresh_dir("sfa_hr_stage2");
  HarnessSetup s1 = tiny_setup("run.frames = 4\nrun.epochs = 1\n");
  s1.out_dir = (dir / "s1").string();
  preset_single_run(s1);

  HarnessSetup s2 = tiny_setup("run.frames = 8\nrun.epochs = 1\nrun.stage = 2\nrun.init = " +
                               (dir / "s1" / "model.ckpt").string() + "\n");
  s2.out_dir = (dir / "s2").string();
  const SingleRunResult result = preset_single_run(s2);

  const Checkpoint ck = load_checkpoint_file((dir / "s2" / "model.ckpt").string());
  CHECK(ck.meta.stage == "stage2");
  CHECK(ck.meta.mode == Mode::sfa);
  CHECK(ck.store.has_group("adapter"));
  CHECK(ck.store.frozen("spatial"));
  CHECK(ck.meta.groups.at("spatial"));
  CHECK(ck.meta.config.num_frames == 8);
  CHECK(ck.store.at("temporal.pos").rows() == 8);
  // frozen spatial stays bitwise at its stage-1 values through training
  const Checkpoint src = load_checkpoint_file((dir / "s1" / "model.ckpt").string());
  for (const auto& [name, t] : src.store.entries())
    if (ParamStore::group_of(name) == "spatial") CHECK(test::bitwise_equal(t, ck.store.at(name)));
  CHECK(result.pipeline.stages.front().metrics.grad_param_counts.count("spatial") == 0);
  fs::remove_all(dir);
}

TEST_CASE("cost grid covers every model/mode/frame cell and is training-free") {
  const fs::path dir = fresh_dir("sfa_hr_cost");
  HarnessSetup s = tiny_setup();
  s.out_dir = dir.string();
  const CostResult result = preset_cost_grid(s);

  const size_t grid = feasibility_frame_grid().size();
  CHECK(result.rows.size() == s.cost_models.size() * 2 * grid);
  CHECK(result.max_frames.size() == s.cost_models.size() * 2);
  for (const CostRow& row : result.rows) CHECK(row.train_bytes > 0);

  // summary agrees with the per-cell rows
  for (const auto& [model, mode, best] : result.max_frames) {
    int expect = 0;
    for (const CostRow& row : result.rows)
      if (row.model == model && row.mode == mode && row.feasible)
        expect = std::max(expect, row.frames);
    CHECK(best == expect);
  }

  // cost.csv carries string cells, so check shape as text: header + one line per row
  CHECK(line_count(slurp(dir / "cost.csv")) == result.rows.size() + 1);
  fs::remove_all(dir);
}

TEST_CASE("headstart preset emits paired curves over the same eval grid") {
  PrecisionGuard guard(Precision::f32);
  const fs::path dir = fresh_dir("sfa_hr_head");
  HarnessSetup s = tiny_setup(
      "preset.stage1_frames = 4\npreset.stage1_epochs = 1\npreset.image_init_epochs = 1\n"
      "preset.stage2_frames = 8\npreset.headstart_epochs = 2\n");
  s.out_dir = dir.string();
  const HeadstartResult result = preset_headstart(s);

  REQUIRE(result.initialized.size() == 2);
  REQUIRE(result.scratch.size() == 2);
  for (size_t i = 0; i < result.initialized.size(); ++i)
    CHECK(result.initialized[i].epoch == result.scratch[i].epoch);
  CHECK(result.npp_initialized < 2);
  CHECK(result.npp_scratch < 2);
  CHECK(fs::exists(dir / "evals_initialized.csv"));
  CHECK(fs::exists(dir / "evals_scratch.csv"));
  CHECK(fs::exists(dir / "headstart.csv"));
  fs::remove_all(dir);
}

TEST_CASE("metric emitters render 6 significant digits and exact headers") {
  CHECK(format_g6(0.0) == "0");
  CHECK(format_g6(0.123456789) == "0.123457");
  CHECK(format_g6(2.0794415416) == "2.07944");
  CHECK(format_g6(62.5) == "62.5");
  CHECK(std::stod(format_g6(1e-7)) == doctest::Approx(1e-7));

  const fs::path dir = fresh_dir("sfa_hr_metrics");
  fs::create_directories(dir);

  // empty metrics: header-only files, still with trailing newline
  write_step_csv((dir / "empty.csv").string(), {});
  CHECK(slurp(dir / "empty.csv") == "step,loss,lr\n");
  write_eval_csv((dir / "empty_evals.csv").string(), {});
  CHECK(slurp(dir / "empty_evals.csv") == "epoch,top1,top5,wall_seconds\n");
  write_step_jsonl((dir / "empty.jsonl").string(), {});
  CHECK(slurp(dir / "empty.jsonl").empty());

  const std::vector<StepRecord> steps{{0, 2.0794415416, 0.0123456789}, {1, 0.5, 0.05}};
  write_step_csv((dir / "steps.csv").string(), steps);
  const std::string text = slurp(dir / "steps.csv");
  CHECK(text == "step,loss,lr\n0,2.07944,0.0123457\n1,0.5,0.05\n");
  const CsvTable parsed = read_csv((dir / "steps.csv").string());
  for (size_t i = 0; i < steps.size(); ++i) {
    CHECK(parsed.rows[i][1] == doctest::Approx(steps[i].loss).epsilon(1e-5));
    CHECK(parsed.rows[i][2] == doctest::Approx(steps[i].lr).epsilon(1e-5));
  }

  write_manifest((dir / "manifest.txt").string(), 0xabcull, 7, {"a.csv", "b.ckpt"});
  CHECK(slurp(dir / "manifest.txt") ==
        "config_hash = 0000000000000abc\nseed = 7\nartifact = a.csv\nartifact = b.ckpt\n");
  fs::remove_all(dir);
}

TEST_CASE("cli exit codes separate config errors from success") {
  const fs::path dir = fresh_dir("sfa_hr_cli");
  fs::create_directories(dir);
  const std::string cfg_path = (dir / "tiny.cfg").string();
  {
    std::ofstream out(cfg_path);
    out << kTinyConfig;
  }

  CHECK(run_cli("--bogus-flag") == 2);
  CHECK(run_cli("--preset does_not_exist --out " + (dir / "x").string()) == 2);
  CHECK(run_cli("--config /nonexistent/sfa.cfg") == 2);
  CHECK(run_cli("--preset single_run --frames 0 --config " + cfg_path) == 2);
  CHECK(run_cli("--preset single_run --stage 2 --init /nonexistent/ck.bin --config " +
                cfg_path) == 2);

  // the documented smoke run: one checkpoint, one metrics file, exit 0
  const fs::path out = dir / "smoke";
  CHECK(run_cli("--preset single_run --stage 1 --frames 4 --epochs 1 --seed 9 --config " +
                cfg_path + " --out " + out.string()) == 0);
  CHECK(fs::exists(out / "model.ckpt"));
  CHECK(fs::exists(out / "steps.csv"));
  CHECK(fs::exists(out / "manifest.txt"));

  const fs::path cost_out = dir / "cost";
  CHECK(run_cli("--preset cost_table6 --out " + cost_out.string()) == 0);
  CHECK(fs::exists(cost_out / "cost_summary.csv"));
  fs::remove_all(dir);
}
