#include "calib/correspondence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "calib/error.hpp"
#include "json.hpp"

namespace calib {

namespace {

constexpr char kMagicV1[6] = {'F', 'M', 'A', 'P', '1', '\0'};
constexpr char kMagicV2[6] = {'F', 'M', 'A', 'P', '2', '\0'};
constexpr std::uint32_t kFilterBilinear = 0;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v),
                              static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw Error(ErrorCode::kParseError, path + ": truncated .fmap header");
  }
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_floats(std::ostream& out, const std::vector<float>& data) {
  for (float f : data) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
}

std::vector<float> get_floats(std::istream& in, size_t n, const std::string& path) {
  std::vector<unsigned char> raw(n * 4);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw Error(ErrorCode::kParseError, path + ": truncated .fmap payload");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::kParseError, path + ": trailing bytes after .fmap payload");
  }
  std::vector<float> out(n);
  for (size_t i = 0; i < n; ++i) {
    const unsigned char* b = &raw[i * 4];
    const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) |
                               (static_cast<std::uint32_t>(b[3]) << 24);
    std::memcpy(&out[i], &bits, 4);
  }
  return out;
}

double cosine(const float* a, double a_norm, const float* b, int c) {
  double dot = 0.0, bb = 0.0;
  for (int k = 0; k < c; ++k) {
    dot += static_cast<double>(a[k]) * b[k];
    bb += static_cast<double>(b[k]) * b[k];
  }
  if (bb == 0.0) return -1.0;
  const double s = dot / (a_norm * std::sqrt(bb));
  return std::clamp(s, -1.0, 1.0);
}

}  // namespace

void FeatureMap::validate() const {
  if (height < 1 || width < 1 || channels < 1) {
    throw Error(ErrorCode::kInvalidArgument, "feature map dimensions must be >= 1");
  }
  if (data.size() != static_cast<size_t>(height) * width * channels) {
    throw Error(ErrorCode::kInvalidArgument, "feature map payload size mismatch");
  }
  for (float f : data) {
    if (!std::isfinite(f)) {
      throw Error(ErrorCode::kInvalidArgument, "feature map contains NaN/Inf");
    }
  }
}

std::vector<float> query_feature(const FeatureMap& fq, const Mark& pq) {
  if (!(pq.u >= 0.0 && pq.u < fq.width && pq.v >= 0.0 && pq.v < fq.height)) {
    throw Error(ErrorCode::kOutOfBounds, "mark outside the feature map");
  }
  const int u0 = static_cast<int>(std::floor(pq.u));
  const int v0 = static_cast<int>(std::floor(pq.v));
  const int u1 = std::min(u0 + 1, fq.width - 1);
  const int v1 = std::min(v0 + 1, fq.height - 1);
  const double au = pq.u - u0, av = pq.v - v0;
  std::vector<float> out(fq.channels);
  for (int k = 0; k < fq.channels; ++k) {
    const double top = (1.0 - au) * fq.at(u0, v0)[k] + au * fq.at(u1, v0)[k];
    const double bottom = (1.0 - au) * fq.at(u0, v1)[k] + au * fq.at(u1, v1)[k];
    out[k] = static_cast<float>((1.0 - av) * top + av * bottom);
  }
  return out;
}

Propagation propagate_mark(const std::vector<float>& fq, const FeatureMap& F) {
  if (static_cast<int>(fq.size()) != F.channels) {
    throw Error(ErrorCode::kChannelMismatch,
                "query has " + std::to_string(fq.size()) + " channels, map has " +
                    std::to_string(F.channels));
  }
  double qn = 0.0;
  for (float f : fq) qn += static_cast<double>(f) * f;
  if (!(qn > 0.0)) {
    throw Error(ErrorCode::kZeroQueryFeature, "query feature has zero norm");
  }
  qn = std::sqrt(qn);

  Propagation out;
  out.heatmap = ImageF(F.width, F.height);
  int best = -1;
  double best_sim = 0.0;
  for (int v = 0; v < F.height; ++v) {
    for (int u = 0; u < F.width; ++u) {
      const double s = cosine(fq.data(), qn, F.at(u, v), F.channels);
      out.heatmap.at(u, v) = static_cast<float>(s);
      if (best < 0 || s > best_sim) {
        best = v * F.width + u;
        best_sim = s;
      }
    }
  }
  out.mark = Mark{static_cast<double>(best % F.width),
                  static_cast<double>(best / F.width), MarkSource::kPropagated};
  out.similarity = best_sim;
  return out;
}

FeatureMap upsample_bilinear(const FeatureMap& F, int height, int width) {
  FeatureMap out(height, width, F.channels);
  const double sy = static_cast<double>(F.height) / height;
  const double sx = static_cast<double>(F.width) / width;
  for (int v = 0; v < height; ++v) {
    const double fy = std::clamp((v + 0.5) * sy - 0.5, 0.0, F.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, F.height - 1);
    const double ay = fy - y0;
    for (int u = 0; u < width; ++u) {
      const double fx = std::clamp((u + 0.5) * sx - 0.5, 0.0, F.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, F.width - 1);
      const double ax = fx - x0;
      float* dst = out.at(u, v);
      for (int k = 0; k < F.channels; ++k) {
        const double top = (1 - ax) * F.at(x0, y0)[k] + ax * F.at(x1, y0)[k];
        const double bot = (1 - ax) * F.at(x0, y1)[k] + ax * F.at(x1, y1)[k];
        dst[k] = static_cast<float>((1 - ay) * top + ay * bot);
      }
    }
  }
  return out;
}

void write_fmap(const std::string& path, const FeatureMap& F) {
  F.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out.write(kMagicV1, 6);
  put_u32(out, F.height);
  put_u32(out, F.width);
  put_u32(out, F.channels);
  put_floats(out, F.data);
}

void write_fmap_patch(const std::string& path, const FeatureMap& F,
                      int target_height, int target_width) {
  F.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out.write(kMagicV2, 6);
  put_u32(out, F.height);
  put_u32(out, F.width);
  put_u32(out, F.channels);
  put_u32(out, target_height);
  put_u32(out, target_width);
  put_u32(out, kFilterBilinear);
  put_floats(out, F.data);
}

FeatureMap read_fmap(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  char magic[6];
  if (!in.read(magic, 6)) throw Error(ErrorCode::kParseError, path + ": no .fmap magic");
  const bool v1 = std::memcmp(magic, kMagicV1, 6) == 0;
  const bool v2 = std::memcmp(magic, kMagicV2, 6) == 0;
  if (!v1 && !v2) throw Error(ErrorCode::kParseError, path + ": bad .fmap magic");
  FeatureMap F;
  F.height = static_cast<int>(get_u32(in, path));
  F.width = static_cast<int>(get_u32(in, path));
  F.channels = static_cast<int>(get_u32(in, path));
  int target_h = F.height, target_w = F.width;
  if (v2) {
    target_h = static_cast<int>(get_u32(in, path));
    target_w = static_cast<int>(get_u32(in, path));
    if (get_u32(in, path) != kFilterBilinear) {
      throw Error(ErrorCode::kParseError, path + ": unsupported upsampling filter");
    }
  }
  if (F.height < 1 || F.width < 1 || F.channels < 1 || target_h < 1 || target_w < 1) {
    throw Error(ErrorCode::kParseError, path + ": empty .fmap dimensions");
  }
  F.data = get_floats(in, static_cast<size_t>(F.height) * F.width * F.channels, path);
  try {
    F.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
  if (target_h != F.height || target_w != F.width) {
    return upsample_bilinear(F, target_h, target_w);
  }
  return F;
}

std::string to_string(MarkSource s) {
  return s == MarkSource::kPropagated ? "propagated" : "human_annotated";
}

void save_mark(const std::string& path, const Mark& m) {
  nlohmann::ordered_json j;
  j["u"] = m.u;
  j["v"] = m.v;
  j["source"] = to_string(m.source);
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << j.dump(2) << "\n";
}

Mark load_mark(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  try {
    const auto j = nlohmann::json::parse(in);
    Mark m;
    m.u = j.at("u").get<double>();
    m.v = j.at("v").get<double>();
    const std::string src = j.value("source", std::string("human_annotated"));
    if (src == "propagated") {
      m.source = MarkSource::kPropagated;
    } else if (src == "human_annotated") {
      m.source = MarkSource::kHumanAnnotated;
    } else {
      throw Error(ErrorCode::kParseError, path + ": unknown mark source '" + src + "'");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
}

}  // namespace calib
