#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sfa/checkpoint.hpp"
#include "sfa/data.hpp"
#include "sfa/model.hpp"

namespace sfa {

struct TrainConfig {
  int epochs = 10;
  int local_batch = 8;
  double base_lr = 0.05;
  double momentum = 0.9;
  double warmup_epochs = 2.5;  // linear ramp, measured in epochs
  uint64_t seed = 0;
  long long eval_every = 0;  // steps between evaluations; 0 = once per epoch
  double label_smoothing = 0.0;

  void validate() const;
};

struct StepRecord {
  long long step = 0;  // 0-based
  double loss = 0.0;
  double lr = 0.0;
};

struct EvalRecord {
  double epoch = 0.0;  // epochs completed at this point, e.g. 1.0 after the first
  double top1 = 0.0;   // percent
  double top5 = 0.0;   // percent
  double wall_seconds = 0.0;
  long long steps = 0;
};

struct RunMetrics {
  std::vector<StepRecord> steps;
  std::vector<EvalRecord> evals;
  // per group, number of parameters that received a gradient on the first step
  std::map<std::string, long long> grad_param_counts;
  double mean_step_seconds = 0.0;  // forward+backward+update only
  double wall_seconds = 0.0;       // whole run including evaluation
};

// Warmup-cosine schedule: linear 0 -> base_lr over the warmup span, then
// base_lr * (1 + cos(pi * progress)) / 2 down to zero at total_steps.
double lr_at(long long step, long long total_steps, const TrainConfig& cfg);

// Momentum update v <- mu v + g, w <- w - lr v for every trainable tensor;
// buffers are created lazily per tensor, so frozen groups never own one.
// Gradients are consumed (cleared). A trainable tensor without a gradient
// signals a broken graph and raises an error.
void sgd_step(ParamStore& store, double lr, double momentum,
              std::map<std::string, std::vector<double>>& momentum_buffers);

// Forward composition implied by the store's group layout: no temporal stack
// means pooled, an adapter means sfa, otherwise baseline.
Mode mode_of(const ParamStore& store);

// Dataset binding for one run: which clips, and how many frames per clip.
struct RunData {
  DatasetSpec dataset;
  int frames = 8;
};

struct EvalResult {
  double top1 = 0.0;  // percent
  double top5 = 0.0;
};

// Accuracy over the eval split, one deterministic stride-sampled clip per
// video. Top-k counts a hit when the true label is among the k best logits,
// ranking equal logits by lowest class index.
EvalResult evaluate(const FEModel& model, const ParamStore& store, const RunData& data);

// First eval index (0-based) whose top1 is within margin percentage points of
// the best top1 anywhere in the run.
size_t near_peak_epoch(const RunMetrics& metrics, double margin_pp = 1.0);

// One training stage: epoch loop, schedule, freeze enforcement, periodic
// evaluation. Optional freeze_flags are applied to the store first. All
// shape/mode preconditions are checked before the first step runs.
RunMetrics run_stage(const FEModel& model, ParamStore& store, const RunData& data,
                     const TrainConfig& cfg,
                     const std::map<std::string, bool>* freeze_flags = nullptr);

// How a pipeline step obtains its starting parameters.
enum class InitKind {
  fresh,    // seeded initialization, no source
  copy_all, // source weights carried over, positional table resampled, all trainable
  surgery,  // stage-2 transfer: frozen spatial + fresh adapter (see checkpoint)
};

struct RunSpec {
  std::string name;
  std::string source;  // name of an earlier step; empty only for fresh init
  InitKind init = InitKind::fresh;
  Mode mode = Mode::baseline;  // layout for fresh init; surgery implies sfa
  int frames = 8;
  HeadPolicy head_policy = HeadPolicy::copy;
  uint64_t init_seed = 0;
  TrainConfig train;
};

struct StageResult {
  std::string name;
  RunMetrics metrics;
  Checkpoint checkpoint;
  double wall_seconds = 0.0;
  double cumulative_wall_seconds = 0.0;
};

struct PipelineResult {
  std::vector<StageResult> stages;
  double total_wall_seconds = 0.0;
};

// Chained runs: each step trains at its own frame count starting from its
// declared source checkpoint. All source references are validated before any
// step executes.
PipelineResult run_pipeline(const FEModelConfig& base_config, const DatasetSpec& dataset,
                            const std::vector<RunSpec>& specs);

}  // namespace sfa
