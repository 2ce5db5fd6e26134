#pragma once

#include <cstdint>
#include <vector>

#include "sfa/video.hpp"

namespace sfa {

enum class Split { train, eval };
const char* split_name(Split s);

// Synthetic clips whose label is decodable only from frame order. A clip is
// divided into `segments` equal runs; during each run a bright sprite starts
// near the center and moves outward along one direction from a shared pool,
// and the class determines the order in which the pool's directions are
// played. Sprite jitter and pixel noise are keyed by (clip id, direction),
// never by segment position, so clips of different classes with the same clip
// id render the same multiset of frames: any frame-order-invariant readout is
// blind to the label by construction.
struct DatasetSpec {
  uint64_t seed = 0;
  int num_classes = 8;
  int clips_per_class_train = 32;
  int clips_per_class_eval = 8;
  int source_frames = 128;  // must be a multiple of segments
  int image_size = 32;
  int sprite_size = 5;
  int segments = 4;  // direction pool size; num_classes <= factorial(segments)
  double noise_std = 0.05;

  void validate() const;
  int split_size(Split split) const;
  int clips_per_class(Split split) const;
};

struct LabeledClip {
  Video video;
  int label = 0;
};

// Direction order played by a class, as indices into the direction pool: the
// label-th permutation of {0..segments-1} in lexicographic order.
std::vector<int> class_direction_order(const DatasetSpec& spec, int label);

// Frame indices selected when subsampling source frames to T: uniform stride
// floor(source/T) starting at phase 0.
std::vector<int> stride_frame_ids(int source_frames, int frames);

// Full-length clip; label is index % num_classes.
LabeledClip make_clip(const DatasetSpec& spec, Split split, int index);

// Only the requested source-frame indices, in the given order. Each frame is
// a pure function of (spec, split, index, frame id), so this matches the
// corresponding frames of make_clip bitwise.
LabeledClip make_clip_frames(const DatasetSpec& spec, Split split, int index,
                             const std::vector<int>& frame_ids);

// Single frame of a clip, relabeled by the direction index the sprite moves
// along during that frame's segment instead of the clip's class. Pixels match
// make_clip bitwise. This is the order-free pretraining view: a single frame
// shows its direction but can never show the order directions are played in.
LabeledClip make_direction_frame(const DatasetSpec& spec, Split split, int index, int frame_id);

// One epoch of batches: a seeded shuffle of the split, subsampled to `frames`
// per clip, exhaustive and non-overlapping with the last short batch dropped.
class BatchIter {
 public:
  BatchIter(const DatasetSpec& spec, Split split, int batch, int frames, uint64_t seed);

  // Fills the next batch; returns false when the epoch is exhausted.
  bool next(std::vector<Video>& clips, std::vector<int>& labels);
  long long batch_count() const;

 private:
  DatasetSpec spec_;
  Split split_;
  int batch_;
  std::vector<int> frame_ids_;
  std::vector<int> order_;
  size_t cursor_ = 0;
};

}  // namespace sfa
