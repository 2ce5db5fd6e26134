#pragma once

#include <vector>

#include "sfa/model.hpp"

namespace sfa {

// Analytical per-step training cost for one worker. Flops count encoder-block
// matmuls (attention 4nd^2 + 2n^2d, MLP 2ndm) per frame for the spatial stack
// and per clip for the temporal stack, plus the adapter and head linears.
// Training in sfa mode freezes the spatial stack by construction, so its
// activations are never taped: it contributes forward flops but no backward
// flops and no activation bytes.
struct CostEstimate {
  long long fwd_flops = 0;
  long long bwd_flops = 0;
  long long activation_bytes = 0;
  long long param_bytes = 0;
  long long optimizer_bytes = 0;

  // Forward breakdown (components of fwd_flops).
  long long fwd_flops_spatial = 0;
  long long fwd_flops_temporal = 0;
  long long fwd_flops_adapter = 0;
  long long fwd_flops_head = 0;

  long long train_memory_bytes() const {
    return param_bytes + optimizer_bytes + activation_bytes;
  }
};

CostEstimate estimate_cost(const FEModelConfig& cfg, Mode mode, int frames, int local_batch,
                           int bytes_per_value);

// The frame counts probed by the feasibility table.
const std::vector<int>& feasibility_frame_grid();

// Largest grid entry whose estimated training memory fits the budget; 0 if none.
int max_feasible_frames(const FEModelConfig& cfg, Mode mode, long long budget_bytes,
                        int local_batch, int bytes_per_value);

}  // namespace sfa
