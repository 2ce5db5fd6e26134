#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

namespace sfa {

// Raw pixel clip, frames x height x width x channels, row-major, values in [0, 1].
// Pixels are stored as float so that clips serialize and replay bit-exactly.
struct Video {
  int frames = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  Video() = default;
  Video(int t, int h, int w, int c)
      : frames(t), height(h), width(w), channels(c),
        data(size_t(t) * size_t(h) * size_t(w) * size_t(c), 0.0f) {}

  size_t index(int t, int y, int x, int c) const {
    return ((size_t(t) * height + y) * width + x) * channels + c;
  }
  float& at(int t, int y, int x, int c) { return data[index(t, y, x, c)]; }
  float at(int t, int y, int x, int c) const { return data[index(t, y, x, c)]; }

  void check_consistent() const {
    if (data.size() != size_t(frames) * height * width * channels)
      throw std::logic_error("video buffer does not match its declared dimensions");
  }
};

}  // namespace sfa
