#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "sfa/tensor.hpp"
#include "sfa/video.hpp"

namespace sfa {

// Forward composition: baseline is spatial -> temporal -> head, sfa inserts the
// per-frame adapter between the two encoders, pooled replaces the temporal
// encoder with mean pooling over frame representations (single-frame/image
// training and the order-invariant control model).
enum class Mode { baseline, sfa, pooled };

const char* mode_name(Mode m);
Mode mode_from_name(const std::string& s);

struct FEModelConfig {
  std::string variant = "desk";
  int image_size = 32;
  int patch_size = 8;
  int channels = 1;
  int num_frames = 8;
  int hidden = 64;
  int heads = 4;
  int spatial_depth = 4;
  int temporal_depth = 2;
  int mlp_dim = 256;
  int adapter_hidden = 64;
  int num_classes = 8;

  int patches_per_frame() const;
  int tokens_per_frame() const;  // patches + class token
  void validate() const;

  // desk plus the full-scale cost-model presets B, L, H, g.
  static FEModelConfig preset(const std::string& name);
};

// Named parameter tensors. The group of a parameter is the prefix before the
// first '.', one of {spatial, temporal, adapter, head}. std::map keeps the
// record order lexicographic, which the checkpoint format relies on.
class ParamStore {
 public:
  void add(const std::string& name, Tensor t);
  bool has(const std::string& name) const;
  bool has_group(const std::string& group) const;
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);
  const std::map<std::string, Tensor>& entries() const { return entries_; }

  static std::string group_of(const std::string& name);
  std::vector<std::string> group_names() const;

  // Flips requires_grad on every tensor of the group (and drops stale grads).
  void set_frozen(const std::string& group, bool frozen);
  bool frozen(const std::string& group) const;
  const std::map<std::string, bool>& freeze_flags() const { return freeze_; }

  std::map<std::string, long long> group_sizes() const;
  long long total_size() const;

 private:
  std::map<std::string, Tensor> entries_;
  std::map<std::string, bool> freeze_;
};

// (name, shape) table for a config+mode; the single source of truth shared by
// init_params, count_params and the checkpoint surgery.
std::vector<std::pair<std::string, std::vector<int>>> param_shapes(const FEModelConfig& cfg,
                                                                   Mode mode);

// Per-group element counts, plus "total".
std::map<std::string, long long> count_params(const FEModelConfig& cfg, Mode mode);

// Resamples a temporal positional-embedding table to a new frame count by
// piecewise-linear interpolation over positions i/(T_src-1). Returns a fresh
// leaf tensor; T_dst == T_src copies the table bitwise.
Tensor interpolate_temporal_posemb(const Tensor& table, int target_frames);

// One freshly initialized parameter: unit layer-norm gains, zero biases and
// zero adapter second layer, truncated-normal(std 0.02) everything else. The
// draw is seeded from (seed, name), so a record's values depend on nothing
// but its own name.
Tensor init_param_record(const std::string& name, const std::vector<int>& shape, uint64_t seed);

class FEModel {
 public:
  explicit FEModel(FEModelConfig cfg);
  const FEModelConfig& config() const { return cfg_; }

  // Fresh parameters: truncated-normal(std 0.02) weights seeded per record
  // from (seed, record name), zero biases, unit layer-norm gains, and an
  // identity-at-init adapter (zero second layer) in sfa mode.
  ParamStore init_params(Mode mode, uint64_t seed) const;

  // Per-frame token matrices [(N+1) x d] for one clip.
  std::vector<Tensor> patch_embed(const Video& clip, const ParamStore& ps) const;
  // Stacked per-frame class-token representations [T x d].
  Tensor spatial_encode(const std::vector<Tensor>& frame_tokens, const ParamStore& ps) const;
  Tensor adapter_apply(const Tensor& frame_reps, const ParamStore& ps) const;
  // Class-token output of the temporal stack [1 x d].
  Tensor temporal_encode(const Tensor& frame_reps, const ParamStore& ps) const;

  Tensor forward(const Video& clip, const ParamStore& ps, Mode mode) const;      // [1 x C]
  Tensor forward_batch(const std::vector<Video>& clips, const ParamStore& ps,
                       Mode mode) const;                                         // [B x C]

 private:
  Tensor encode_tokens(const ParamStore& ps, const std::string& prefix, int depth,
                       Tensor x) const;
  Tensor encoder_block(const ParamStore& ps, const std::string& prefix, Tensor x) const;

  FEModelConfig cfg_;
};

}  // namespace sfa
