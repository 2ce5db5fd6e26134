#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfa/model.hpp"

namespace sfa {

// Binary checkpoint stream, little-endian: magic "SFAV1", version u8 = 1,
// meta-length u32 + JSON meta text, record-count u32, then per record a
// u16-length name, u8 ndim, u32 dims and the raw binary32 values. Records are
// lexicographic by name, which makes saving deterministic; values are stored
// as binary32, so stores produced in the 32-bit numeric mode roundtrip
// bitwise.

enum class CheckpointErrorKind {
  io,
  bad_magic,
  bad_version,
  bad_meta,
  truncated,
  length_mismatch,
  unknown_group,
  bad_order,
};

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

struct CheckpointMeta {
  FEModelConfig config;
  Mode mode = Mode::baseline;
  std::string stage;  // free-form label, e.g. "stage1"
  int epoch = 0;
  uint64_t dataset_seed = 0;
  // group -> frozen flag; doubles as the set of admissible record prefixes
  std::map<std::string, bool> groups;
};

struct Checkpoint {
  ParamStore store;
  CheckpointMeta meta;
};

// Builds the meta group map from the store's freeze flags.
CheckpointMeta make_meta(const ParamStore& store, const FEModelConfig& config, Mode mode,
                         const std::string& stage, int epoch, uint64_t dataset_seed);

std::vector<uint8_t> save_checkpoint(const ParamStore& store, const CheckpointMeta& meta);
Checkpoint load_checkpoint(const std::vector<uint8_t>& bytes);

void save_checkpoint_file(const std::string& path, const ParamStore& store,
                          const CheckpointMeta& meta);
Checkpoint load_checkpoint_file(const std::string& path);

// Invalid or incompatible inputs to the stage-2 initialization transfer.
class SurgeryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class HeadPolicy { copy, reinit };

// Stage-2 store from a trained stage-1 checkpoint: spatial weights copied
// verbatim and frozen, temporal weights copied with the positional table
// resampled to target.num_frames, a fresh identity-initialized adapter, and
// the head either copied (same class count) or freshly initialized. The
// architectures must agree in everything but num_frames (and num_classes when
// the head is re-initialized).
ParamStore surgery_stage2_init(const Checkpoint& stage1, const FEModelConfig& target,
                               HeadPolicy head_policy, uint64_t seed);

// Weight carry-over between runs at different frame counts: every source
// record copied (the temporal positional table resampled to
// target.num_frames), same group layout, nothing frozen.
ParamStore copy_all_init(const Checkpoint& source, const FEModelConfig& target);

// Initialization variants of the modification study. Every variant except
// full surgery starts from an image-style source providing the spatial
// weights; roman numerals follow the study rows.
enum class AblationVariant {
  full_finetune,           // source spatial, everything trainable, no adapter
  frozen_spatial,          // I: source spatial frozen, fresh temporal
  frozen_temporal,         // II: source spatial trainable, fresh temporal frozen
  frozen_spatial_adapter,  // III: source spatial frozen, fresh temporal, adapter
  surgery,                 // V: full stage-2 transfer from a stage-1 checkpoint
};

const char* ablation_variant_name(AblationVariant v);
AblationVariant ablation_variant_from_name(const std::string& s);

struct AblationSources {
  const Checkpoint* spatial_source = nullptr;  // any checkpoint with a spatial group
  const Checkpoint* stage1 = nullptr;          // full stage-1 model, required by surgery
};

ParamStore ablation_init(AblationVariant variant, const AblationSources& sources,
                         const FEModelConfig& config, uint64_t seed);

// Forward mode implied by a variant's parameter layout.
Mode ablation_mode(AblationVariant variant);

}  // namespace sfa
