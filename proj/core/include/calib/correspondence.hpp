#pragma once

#include <string>
#include <vector>

#include "calib/image.hpp"

namespace calib {

/// Dense H x W x C descriptor grid, row-major (v, then u, then channel).
struct FeatureMap {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  FeatureMap() = default;
  FeatureMap(int h, int w, int c)
      : height(h), width(w), channels(c),
        data(static_cast<size_t>(h) * w * c, 0.0f) {}

  const float* at(int u, int v) const {
    return &data[(static_cast<size_t>(v) * width + u) * channels];
  }
  float* at(int u, int v) {
    return &data[(static_cast<size_t>(v) * width + u) * channels];
  }
  /// Throws kInvalidArgument on empty dimensions, size mismatch or NaN/Inf.
  void validate() const;
};

enum class MarkSource { kHumanAnnotated, kPropagated };

struct Mark {
  double u = 0.0;
  double v = 0.0;
  MarkSource source = MarkSource::kHumanAnnotated;
};

struct Propagation {
  Mark mark;
  double similarity = -1.0;
  ImageF heatmap;  // cosine similarity in [-1, 1]
};

/// Bilinear sample at (u, v). Throws kOutOfBounds unless 0 <= u < W and
/// 0 <= v < H.
std::vector<float> query_feature(const FeatureMap& fq, const Mark& pq);

/// Cosine-similarity argmax of `fq` over `F`. Zero-norm cells score -1; ties
/// go to the smallest row-major index. Throws kChannelMismatch,
/// kZeroQueryFeature.
Propagation propagate_mark(const std::vector<float>& fq, const FeatureMap& F);

/// Bilinear resampling to (height, width) with pixel-center alignment.
FeatureMap upsample_bilinear(const FeatureMap& F, int height, int width);

// .fmap files. Version 1: "FMAP1\0", u32 H, W, C, then H*W*C float32, all
// little-endian. Version 2 adds a target size and a filter code for maps
// stored at patch resolution: "FMAP2\0", u32 H, W, C, target_h, target_w,
// filter (0 = bilinear), data. Version 2 maps are upsampled on load.
void write_fmap(const std::string& path, const FeatureMap& F);
void write_fmap_patch(const std::string& path, const FeatureMap& F,
                      int target_height, int target_width);
FeatureMap read_fmap(const std::string& path);

std::string to_string(MarkSource s);
void save_mark(const std::string& path, const Mark& m);
Mark load_mark(const std::string& path);

}  // namespace calib
