#pragma once

#include <cstdint>
#include <vector>

namespace calib {

/// Row-major single-channel raster.
template <class T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{})
      : width(w), height(h), data(static_cast<size_t>(w) * h, fill) {}

  T& at(int x, int y) { return data[static_cast<size_t>(y) * width + x]; }
  const T& at(int x, int y) const {
    return data[static_cast<size_t>(y) * width + x];
  }
  bool same_shape(const Image& o) const {
    return width == o.width && height == o.height;
  }
  bool operator==(const Image&) const = default;
};

using ImageF = Image<float>;
using ImageU8 = Image<std::uint8_t>;
using ImageI32 = Image<std::int32_t>;

struct ImageRgb {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // interleaved RGB
};

}  // namespace calib
