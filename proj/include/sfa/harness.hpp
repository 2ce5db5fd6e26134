#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sfa/checkpoint.hpp"
#include "sfa/config_file.hpp"
#include "sfa/data.hpp"
#include "sfa/train.hpp"

namespace sfa {

// Everything an experiment run needs, resolved from a flat `key = value`
// config file with command-line overrides applied on top. Preset budgets are
// ordinary keys, so experiment scale is visible in the config rather than
// baked into preset code.
struct HarnessSetup {
  FEModelConfig model;  // model.* (num_classes follows data.classes)
  DatasetSpec data;     // data.* (image_size follows model.image_size)
  TrainConfig train;    // train.* (epochs/seed resolved per run)

  // run.*
  uint64_t seed = 0;
  int frames = 8;        // single_run train frames
  int stage = 1;         // single_run stage (1 fresh, 2 surgery from init)
  int epochs = -1;       // override; -1 keeps the preset / train.epochs value
  std::string init_path;  // stage-2 source checkpoint
  std::string out_dir = "out";
  HeadPolicy head = HeadPolicy::copy;
  Precision precision = Precision::f32;

  // preset.* budget constants
  int stage1_frames = 8;
  int stage1_epochs = 40;
  int stage2_frames = 16;
  int image_init_epochs = 10;
  int table1_epochs = 10;
  int sweep_stage1_epochs = 20;
  int sweep_stage2_epochs = 8;
  std::vector<int> sweep_sources{2, 4, 8};
  int sweep_target_frames = 16;
  int headstart_epochs = 12;
  double npp_margin_pp = 1.0;
  int curriculum_unit_epochs = 4;
  std::vector<int> curriculum_frames{8, 16, 32};
  double cost_budget_gb = 16.0;
  int cost_local_batch = 1;
  std::vector<std::string> cost_models{"B", "L", "H", "g"};
};

// Values taken from CLI flags; unset fields fall back to the config file and
// then to defaults.
struct CliOverrides {
  std::optional<uint64_t> seed;
  std::optional<int> frames;
  std::optional<int> epochs;
  std::optional<int> stage;
  std::optional<std::string> init;
  std::optional<std::string> out;
  std::optional<std::string> precision;  // "f32" | "f64"
  std::optional<std::string> head;       // "copy" | "reinit"
};

// Applies file values then overrides; rejects unknown keys and out-of-range
// values with ConfigError.
HarnessSetup resolve_setup(const ConfigMap& file, const CliOverrides& cli);

// Canonical sorted `key = value` rendering of the resolved setup. Hashing this
// text gives the manifest's config hash, so equal setups hash equally no
// matter where their values came from.
std::string serialize_setup(const HarnessSetup& s);

const std::vector<std::string>& preset_names();

// Modification-study table. Rows come out in the fixed study order
// {full_finetune, frozen_spatial, frozen_temporal, frozen_spatial_adapter,
// surgery}; step_time_ratio is each row's mean compute step time over the
// fully-trainable row's.
struct AblationRow {
  std::string variant;
  double top1 = 0, top5 = 0;
  double mean_step_seconds = 0;
  double step_time_ratio = 1.0;
  double wall_seconds = 0;
};
struct AblationResult {
  std::vector<AblationRow> rows;
  double stage1_wall_seconds = 0;    // shared prework: image init + stage 1
  double variants_wall_seconds = 0;  // the five matched-budget runs
  double total_wall_seconds = 0;
  std::vector<std::string> artifacts;
};

struct SweepCell {
  std::string source;  // "image" or "<N>f"
  int source_frames = 0;  // 0 for the image-only source
  int target_frames = 0;
  double top1 = 0;
};
struct SweepResult {
  std::vector<SweepCell> cells;
  double total_wall_seconds = 0;
  std::vector<std::string> artifacts;
};

// Transfer-initialized vs scratch training at the same shape and budget.
struct HeadstartResult {
  std::vector<EvalRecord> initialized, scratch;
  long long npp_initialized = 0, npp_scratch = 0;  // near-peak eval indexes
  double first_eval_gap_pp = 0;
  double total_wall_seconds = 0;
  std::vector<std::string> artifacts;
};

// One row per training stage of the curriculum study's models A..E.
struct CurriculumRow {
  std::string model;
  std::string stage;
  int frames = 0, epochs = 0;
  double top1 = 0;
  double stage_wall_seconds = 0;
  double cumulative_wall_seconds = 0;  // within its model's chain
};
struct CurriculumResult {
  std::vector<CurriculumRow> rows;
  double total_wall_seconds = 0;
  std::vector<std::string> artifacts;
};

// Feasibility grid: per model preset and mode, whether estimated training
// memory at each probed frame count fits the budget.
struct CostRow {
  std::string model;
  std::string mode;
  int frames = 0;
  long long train_bytes = 0;
  bool feasible = false;
};
struct CostResult {
  std::vector<CostRow> rows;
  // (model, mode) -> largest feasible probed frame count, 0 if none
  std::vector<std::tuple<std::string, std::string, int>> max_frames;
  std::vector<std::string> artifacts;
};

struct SingleRunResult {
  PipelineResult pipeline;
  std::vector<std::string> artifacts;
};

// Presets. Each creates setup.out_dir, trains and evaluates per its budget
// keys, writes metric/checkpoint artifacts plus a manifest, and returns the
// typed summary the acceptance suite asserts on. Runs inside a preset execute
// sequentially so step-time comparisons are fair.
AblationResult preset_ablation_table1(const HarnessSetup& setup);
SweepResult preset_frame_sweep(const HarnessSetup& setup);
HeadstartResult preset_headstart(const HarnessSetup& setup);
CurriculumResult preset_curriculum(const HarnessSetup& setup);
CostResult preset_cost_grid(const HarnessSetup& setup);
SingleRunResult preset_single_run(const HarnessSetup& setup);

// Dispatch by preset name; throws ConfigError for an unknown name.
void run_preset(const std::string& name, const HarnessSetup& setup);

}  // namespace sfa
