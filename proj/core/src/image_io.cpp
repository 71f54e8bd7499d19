#include "calib/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include "calib/error.hpp"

namespace calib {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
  FilePtr f(std::fopen(path.c_str(), mode));
  if (!f) {
    throw Error(ErrorCode::kIoError, std::string("cannot open ") + path);
  }
  return f;
}

[[noreturn]] void png_fail(png_structp, png_const_charp msg) {
  throw Error(ErrorCode::kParseError, std::string("png: ") + msg);
}

void png_warn(png_structp, png_const_charp) {}

void write_png(const std::string& path, int width, int height, int color_type,
               const std::uint8_t* data, int channels) {
  FilePtr f = open_file(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                            png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  try {
    png_init_io(png, f.get());
    png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < height; ++y) {
      png_write_row(png, data + static_cast<size_t>(y) * width * channels);
    }
    png_write_end(png, nullptr);
  } catch (...) {
    png_destroy_write_struct(&png, &info);
    throw;
  }
  png_destroy_write_struct(&png, &info);
}

struct PngRead {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;
};

PngRead read_png(const std::string& path, bool strict_gray8) {
  FilePtr f = open_file(path, "rb");
  std::uint8_t sig[8];
  if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
    throw Error(ErrorCode::kParseError, path + " is not a PNG file");
  }
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                           png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  PngRead out;
  try {
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color = png_get_color_type(png, info);
    if (strict_gray8) {
      if (bit_depth != 8 || color != PNG_COLOR_TYPE_GRAY) {
        throw Error(ErrorCode::kParseError,
                    path + ": expected 8-bit grayscale PNG");
      }
    } else {
      if (bit_depth == 16) png_set_strip_16(png);
      if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
      if (color == PNG_COLOR_TYPE_GRAY && bit_depth < 8)
        png_set_expand_gray_1_2_4_to_8(png);
      if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
      if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
      png_read_update_info(png, info);
    }
    out.width = static_cast<int>(png_get_image_width(png, info));
    out.height = static_cast<int>(png_get_image_height(png, info));
    out.channels = png_get_channels(png, info);
    const size_t stride = png_get_rowbytes(png, info);
    out.data.resize(stride * out.height);
    std::vector<png_bytep> rows(out.height);
    for (int y = 0; y < out.height; ++y) rows[y] = out.data.data() + y * stride;
    png_read_image(png, rows.data());
  } catch (...) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw;
  }
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace

void write_png_gray(const std::string& path, const ImageU8& img) {
  write_png(path, img.width, img.height, PNG_COLOR_TYPE_GRAY, img.data.data(), 1);
}

ImageU8 read_png_gray(const std::string& path) {
  PngRead r = read_png(path, true);
  ImageU8 img;
  img.width = r.width;
  img.height = r.height;
  img.data = std::move(r.data);
  return img;
}

ImageRgb read_png_rgb(const std::string& path) {
  PngRead r = read_png(path, false);
  return ImageRgb{r.width, r.height, std::move(r.data)};
}

void write_png_rgb(const std::string& path, const ImageRgb& img) {
  write_png(path, img.width, img.height, PNG_COLOR_TYPE_RGB, img.data.data(), 3);
}

void write_pfm(const std::string& path, const ImageF& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << "Pf\n" << img.width << " " << img.height << "\n-1\n";
  static_assert(std::numeric_limits<float>::is_iec559);
  std::vector<float> row(img.width);
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x) {
      const float v = img.at(x, y);
      row[x] = std::isinf(v) && v > 0 ? kPfmInfinity : v;
    }
    // Host is little-endian (x86/ARM); the header's negative scale says so.
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
}

ImageF read_pfm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  in.get();
  if (magic != "Pf" || w <= 0 || h <= 0 || scale >= 0.0) {
    throw Error(ErrorCode::kParseError,
                path + ": expected little-endian grayscale PFM");
  }
  ImageF img(w, h);
  std::vector<float> row(w);
  for (int y = h - 1; y >= 0; --y) {
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!in) throw Error(ErrorCode::kParseError, path + ": truncated PFM");
    for (int x = 0; x < w; ++x) {
      img.at(x, y) = row[x] >= kPfmInfinity
                         ? std::numeric_limits<float>::infinity()
                         : row[x];
    }
  }
  return img;
}

ImageU8 coverage_to_mask(const ImageF& coverage) {
  ImageU8 out(coverage.width, coverage.height);
  for (size_t i = 0; i < coverage.data.size(); ++i) {
    const double v = std::floor(static_cast<double>(coverage.data[i]) * 255.0 + 0.5);
    out.data[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  }
  return out;
}

ImageF mask_to_coverage(const ImageU8& mask) {
  ImageF out(mask.width, mask.height);
  for (size_t i = 0; i < mask.data.size(); ++i) {
    out.data[i] = static_cast<float>(mask.data[i]) / 255.0f;
  }
  return out;
}

}  // namespace calib
