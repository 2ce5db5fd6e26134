#include "sfa/cost.hpp"

#include <stdexcept>

namespace sfa {

namespace {

long long block_fwd_flops(long long n, long long d, long long m) {
  return 4 * n * d * d + 2 * n * n * d + 2 * n * d * m;
}

// Values that must stay resident per taped block: token activations at the
// residual/norm/projection boundaries (~5d + m per token) and the attention
// probability matrices (h n^2).
long long block_act_values(long long n, long long d, long long m, long long h) {
  return n * (5 * d + m) + h * n * n;
}

bool group_trainable(Mode mode, const std::string& group) {
  if (mode == Mode::sfa) return group != "spatial";
  return true;
}

}  // namespace

CostEstimate estimate_cost(const FEModelConfig& cfg, Mode mode, int frames, int local_batch,
                           int bytes_per_value) {
  cfg.validate();
  if (frames < 1 || local_batch < 1 || bytes_per_value < 1)
    throw std::invalid_argument("estimate_cost: frames, batch and value width must be positive");

  const long long d = cfg.hidden, m = cfg.mlp_dim, h = cfg.heads;
  const long long ah = cfg.adapter_hidden > 0 ? cfg.adapter_hidden : d;
  const long long ns = cfg.tokens_per_frame();
  const long long nt = frames + 1;
  const long long B = local_batch;

  CostEstimate e;
  e.fwd_flops_spatial = B * frames * cfg.spatial_depth * block_fwd_flops(ns, d, m);
  if (mode != Mode::pooled)
    e.fwd_flops_temporal = B * cfg.temporal_depth * block_fwd_flops(nt, d, m);
  if (mode == Mode::sfa) e.fwd_flops_adapter = B * 2 * frames * d * ah;
  e.fwd_flops_head = B * 2 * d * cfg.num_classes;
  e.fwd_flops =
      e.fwd_flops_spatial + e.fwd_flops_temporal + e.fwd_flops_adapter + e.fwd_flops_head;

  // Backward sweeps only the taped (trainable-reachable) subgraph; a frozen
  // stack is skipped during recording, so its share of the backward is zero.
  long long fwd_trainable = 0;
  if (group_trainable(mode, "spatial")) fwd_trainable += e.fwd_flops_spatial;
  if (group_trainable(mode, "temporal")) fwd_trainable += e.fwd_flops_temporal;
  if (group_trainable(mode, "adapter")) fwd_trainable += e.fwd_flops_adapter;
  if (group_trainable(mode, "head")) fwd_trainable += e.fwd_flops_head;
  e.bwd_flops = 3 * fwd_trainable;

  long long act_values = 0;
  if (group_trainable(mode, "spatial"))
    act_values += frames * cfg.spatial_depth * block_act_values(ns, d, m, h);
  if (mode != Mode::pooled && group_trainable(mode, "temporal"))
    act_values += cfg.temporal_depth * block_act_values(nt, d, m, h);
  if (mode == Mode::sfa && group_trainable(mode, "adapter")) act_values += frames * (ah + d);
  act_values += cfg.num_classes;
  e.activation_bytes = B * act_values * bytes_per_value;

  FEModelConfig at_frames = cfg;
  at_frames.num_frames = frames;
  const auto counts = count_params(at_frames, mode);
  long long trainable_params = 0;
  for (const auto& [group, count] : counts) {
    if (group == "total") continue;
    if (group_trainable(mode, group)) trainable_params += count;
  }
  e.param_bytes = counts.at("total") * bytes_per_value;
  e.optimizer_bytes = trainable_params * bytes_per_value;
  return e;
}

const std::vector<int>& feasibility_frame_grid() {
  static const std::vector<int> grid = {4, 8, 16, 32, 48, 64, 96, 128};
  return grid;
}

int max_feasible_frames(const FEModelConfig& cfg, Mode mode, long long budget_bytes,
                        int local_batch, int bytes_per_value) {
  int best = 0;
  for (int frames : feasibility_frame_grid()) {
    const CostEstimate e = estimate_cost(cfg, mode, frames, local_batch, bytes_per_value);
    if (e.train_memory_bytes() <= budget_bytes) best = frames;
  }
  return best;
}

}  // namespace sfa
