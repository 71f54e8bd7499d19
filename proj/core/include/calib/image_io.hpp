#pragma once

#include <string>

#include "calib/image.hpp"

namespace calib {

/// Largest finite float; stands in for +Inf in depth PFM files.
inline constexpr float kPfmInfinity = 3.4e38f;

/// 8-bit grayscale PNG. Strict: rejects other bit depths / colour types.
void write_png_gray(const std::string& path, const ImageU8& img);
ImageU8 read_png_gray(const std::string& path);

/// Any PNG expanded to 8-bit RGB.
ImageRgb read_png_rgb(const std::string& path);
void write_png_rgb(const std::string& path, const ImageRgb& img);

/// Little-endian grayscale PFM ("Pf", scale -1). Rows are stored bottom to
/// top as the format requires; +Inf is written as kPfmInfinity and read back
/// as +Inf.
void write_pfm(const std::string& path, const ImageF& img);
ImageF read_pfm(const std::string& path);

/// coverage * 255 rounded half-up, clamped to [0, 255].
ImageU8 coverage_to_mask(const ImageF& coverage);
ImageF mask_to_coverage(const ImageU8& mask);

}  // namespace calib
