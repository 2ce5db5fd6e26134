#include "sfa/data.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "sfa/rng.hpp"

namespace sfa {

namespace {

// Up to eight unit directions: axes first, then diagonals.
const int kDirX[8] = {1, 0, -1, 0, 1, -1, -1, 1};
const int kDirY[8] = {0, 1, 0, -1, 1, 1, -1, -1};

long long factorial(int n) {
  long long f = 1;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

uint64_t stream_key(const DatasetSpec& spec, Split split, uint64_t a, uint64_t b, uint64_t c) {
  uint64_t h = hash_combine(spec.seed, split == Split::train ? 1 : 2);
  h = hash_combine(h, a);
  h = hash_combine(h, b);
  return hash_combine(h, c);
}

// Radial sprite offset within a segment: starts clearly off-center (so the
// direction is readable from any frame, including segment starts) and grows
// linearly, saturating at the image-safe maximum around 60% through the
// segment.
int sprite_offset(const DatasetSpec& spec, int k) {
  const int max_off = spec.image_size / 2 - spec.sprite_size / 2 - 3;
  const int base = std::min(max_off, 4);
  const int seg_len = spec.source_frames / spec.segments;
  const int grown = base + int(std::lround(k * double(max_off - base) / (0.6 * seg_len)));
  return std::min(max_off, grown);
}

// One source frame: sprite at its segment-relative position plus seeded
// noise. Depends on the direction played, not on which segment plays it.
void render_frame(const DatasetSpec& spec, Split split, int clip_id, int dir_id, int k,
                  float* out) {
  const int hw = spec.image_size;
  Rng jitter_rng(stream_key(spec, split, uint64_t(clip_id), uint64_t(dir_id), 0x4a49));
  const int jx = int(jitter_rng.next_int(-2, 2));
  const int jy = int(jitter_rng.next_int(-2, 2));

  const int off = sprite_offset(spec, k);
  const int cx = (hw - 1) / 2 + jx + off * kDirX[dir_id];
  const int cy = (hw - 1) / 2 + jy + off * kDirY[dir_id];

  std::vector<double> frame(size_t(hw) * hw, 0.0);
  const int ss = spec.sprite_size;
  const double sc = (ss - 1) / 2.0;
  const double two_sigma_sq = 2.0 * (ss / 3.0) * (ss / 3.0);
  for (int sy = 0; sy < ss; ++sy)
    for (int sx = 0; sx < ss; ++sx) {
      const int y = cy - ss / 2 + sy;
      const int x = cx - ss / 2 + sx;
      if (y < 0 || y >= hw || x < 0 || x >= hw) continue;
      const double r2 = (sy - sc) * (sy - sc) + (sx - sc) * (sx - sc);
      frame[size_t(y) * hw + x] += std::exp(-r2 / two_sigma_sq);
    }

  Rng noise_rng(stream_key(spec, split, uint64_t(clip_id), uint64_t(dir_id), uint64_t(k)));
  for (size_t i = 0; i < frame.size(); ++i) {
    const double v = frame[i] + spec.noise_std * noise_rng.next_normal();
    out[i] = float(std::clamp(v, 0.0, 1.0));
  }
}

}  // namespace

const char* split_name(Split s) { return s == Split::train ? "train" : "eval"; }

void DatasetSpec::validate() const {
  if (num_classes < 2) throw std::invalid_argument("need at least two classes");
  if (segments < 1 || segments > 8)
    throw std::invalid_argument("segments must be in [1, 8], got " + std::to_string(segments));
  if (num_classes > factorial(segments))
    throw std::invalid_argument(std::to_string(num_classes) + " classes need more than " +
                                std::to_string(factorial(segments)) +
                                " direction orderings; increase segments");
  if (source_frames < segments || source_frames % segments != 0)
    throw std::invalid_argument("source_frames must be a positive multiple of segments");
  if (clips_per_class_train < 1 || clips_per_class_eval < 1)
    throw std::invalid_argument("clips_per_class must be positive");
  if (sprite_size < 1 || sprite_size >= image_size / 2)
    throw std::invalid_argument("sprite does not fit the image");
  if (noise_std < 0.0) throw std::invalid_argument("noise_std must be non-negative");
}

int DatasetSpec::clips_per_class(Split split) const {
  return split == Split::train ? clips_per_class_train : clips_per_class_eval;
}

int DatasetSpec::split_size(Split split) const { return num_classes * clips_per_class(split); }

std::vector<int> class_direction_order(const DatasetSpec& spec, int label) {
  spec.validate();
  if (label < 0 || label >= spec.num_classes)
    throw std::out_of_range("label " + std::to_string(label) + " out of range");
  std::vector<int> order(static_cast<size_t>(spec.segments));
  for (int i = 0; i < spec.segments; ++i) order[size_t(i)] = i;
  for (int i = 0; i < label; ++i) std::next_permutation(order.begin(), order.end());
  return order;
}

std::vector<int> stride_frame_ids(int source_frames, int frames) {
  if (frames < 1) throw std::invalid_argument("frame count must be positive");
  if (frames > source_frames)
    throw std::invalid_argument("cannot sample " + std::to_string(frames) + " frames from " +
                                std::to_string(source_frames) + " source frames");
  const int stride = source_frames / frames;
  std::vector<int> ids(static_cast<size_t>(frames));
  for (int i = 0; i < frames; ++i) ids[size_t(i)] = i * stride;
  return ids;
}

LabeledClip make_clip_frames(const DatasetSpec& spec, Split split, int index,
                             const std::vector<int>& frame_ids) {
  spec.validate();
  if (index < 0 || index >= spec.split_size(split))
    throw std::out_of_range("clip index " + std::to_string(index) + " outside the " +
                            std::string(split_name(split)) + " split of " +
                            std::to_string(spec.split_size(split)));
  const int label = index % spec.num_classes;
  const int clip_id = index / spec.num_classes;
  const std::vector<int> order = class_direction_order(spec, label);
  const int seg_len = spec.source_frames / spec.segments;

  LabeledClip out;
  out.label = label;
  out.video = Video(int(frame_ids.size()), spec.image_size, spec.image_size, 1);
  const size_t frame_px = size_t(spec.image_size) * spec.image_size;
  for (size_t i = 0; i < frame_ids.size(); ++i) {
    const int f = frame_ids[i];
    if (f < 0 || f >= spec.source_frames)
      throw std::out_of_range("frame id " + std::to_string(f) + " outside the source clip");
    const int dir_id = order[size_t(f / seg_len)];
    render_frame(spec, split, clip_id, dir_id, f % seg_len, out.video.data.data() + i * frame_px);
  }
  return out;
}

LabeledClip make_clip(const DatasetSpec& spec, Split split, int index) {
  std::vector<int> all(static_cast<size_t>(spec.source_frames));
  for (int i = 0; i < spec.source_frames; ++i) all[size_t(i)] = i;
  return make_clip_frames(spec, split, index, all);
}

LabeledClip make_direction_frame(const DatasetSpec& spec, Split split, int index, int frame_id) {
  LabeledClip out = make_clip_frames(spec, split, index, {frame_id});
  const std::vector<int> order = class_direction_order(spec, out.label);
  const int seg_len = spec.source_frames / spec.segments;
  out.label = order[size_t(frame_id / seg_len)];
  return out;
}

BatchIter::BatchIter(const DatasetSpec& spec, Split split, int batch, int frames, uint64_t seed)
    : spec_(spec), split_(split), batch_(batch) {
  spec_.validate();
  if (batch < 1) throw std::invalid_argument("batch size must be positive");
  frame_ids_ = stride_frame_ids(spec.source_frames, frames);
  order_.resize(size_t(spec_.split_size(split)));
  for (size_t i = 0; i < order_.size(); ++i) order_[i] = int(i);
  Rng rng(hash_combine(seed, split == Split::train ? 0x7261 : 0x6576));
  for (size_t i = order_.size(); i > 1; --i)
    std::swap(order_[i - 1], order_[size_t(rng.next_int(0, int64_t(i) - 1))]);
}

long long BatchIter::batch_count() const { return int64_t(order_.size()) / batch_; }

bool BatchIter::next(std::vector<Video>& clips, std::vector<int>& labels) {
  clips.clear();
  labels.clear();
  if (cursor_ + size_t(batch_) > order_.size()) return false;  // drop the short tail
  for (int b = 0; b < batch_; ++b) {
    LabeledClip lc = make_clip_frames(spec_, split_, order_[cursor_ + size_t(b)], frame_ids_);
    clips.push_back(std::move(lc.video));
    labels.push_back(lc.label);
  }
  cursor_ += size_t(batch_);
  return true;
}

}  // namespace sfa
