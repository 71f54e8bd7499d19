#include "calib/temporal_pnp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "calib/error.hpp"
#include "calib/random.hpp"

namespace calib {

void Track2D::validate(int frame_count, const Intrinsics& K) const {
  if (static_cast<int>(points.size()) != frame_count) {
    throw Error(ErrorCode::kLengthMismatch,
                "track has " + std::to_string(points.size()) + " rows, episode has " +
                    std::to_string(frame_count) + " frames");
  }
  for (size_t t = 0; t < points.size(); ++t) {
    const auto& p = points[t];
    if (!p.visible) continue;
    if (!std::isfinite(p.u) || !std::isfinite(p.v) || p.u < 0 || p.v < 0 ||
        p.u >= K.width || p.v >= K.height) {
      throw Error(ErrorCode::kOutOfBounds,
                  "visible track point outside the image at t=" + std::to_string(t));
    }
  }
}

Correspondences build_correspondences(const Track2D& track, const RobotModel& model,
                                      const std::vector<JointState>& joints) {
  if (track.points.size() != joints.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                "track length " + std::to_string(track.points.size()) +
                    " != joint rows " + std::to_string(joints.size()));
  }
  Correspondences out;
  for (size_t t = 0; t < joints.size(); ++t) {
    const auto& p = track.points[t];
    if (!p.visible) continue;
    out.push_back({Vec2(p.u, p.v), eef_point(model, joints[t]), static_cast<int>(t)});
  }
  if (static_cast<int>(out.size()) < kMinCorrespondences) {
    throw Error(ErrorCode::kTooFewVisible,
                std::to_string(out.size()) + " visible frames, need " +
                    std::to_string(kMinCorrespondences));
  }
  return out;
}

Correspondences subsample_uniform(const Correspondences& c, int max_pairs) {
  const int n = static_cast<int>(c.size());
  if (n <= max_pairs || max_pairs < 2) return c;
  Correspondences out;
  out.reserve(max_pairs);
  for (int k = 0; k < max_pairs; ++k) {
    const long idx = std::lround(static_cast<double>(k) * (n - 1) / (max_pairs - 1));
    out.push_back(c[idx]);
  }
  return out;
}

RansacResult solve_pnp_ransac(const Correspondences& c, const Intrinsics& K,
                              double threshold_px, int iterations, std::uint64_t seed) {
  const int n = static_cast<int>(c.size());
  if (n < kMinCorrespondences) {
    throw Error(ErrorCode::kTooFewVisible, "RANSAC needs at least 6 correspondences");
  }
  std::vector<bool> best_mask;
  int best_count = 0;
  double best_sse = 0.0;
  std::vector<int> idx(n);
  for (int it = 0; it < iterations; ++it) {
    Rng rng = make_rng({seed, static_cast<std::uint64_t>(it)});
    std::iota(idx.begin(), idx.end(), 0);
    for (int k = 0; k < kMinCorrespondences; ++k) {
      std::uniform_int_distribution<int> pick(k, n - 1);
      std::swap(idx[k], idx[pick(rng)]);
    }
    Correspondences subset(kMinCorrespondences);
    for (int k = 0; k < kMinCorrespondences; ++k) subset[k] = c[idx[k]];
    Extrinsic pose;
    try {
      pose = solve_epnp(subset, K);
    } catch (const Error&) {
      continue;
    }
    const auto errs = reprojection_errors(c, K, pose);
    std::vector<bool> mask(n);
    int count = 0;
    double sse = 0.0;
    for (int i = 0; i < n; ++i) {
      mask[i] = errs[i] < threshold_px;
      if (mask[i]) {
        ++count;
        sse += errs[i] * errs[i];
      }
    }
    if (count > best_count || (count == best_count && count > 0 && sse < best_sse)) {
      best_count = count;
      best_sse = sse;
      best_mask = std::move(mask);
    }
  }
  if (best_count < kMinCorrespondences) {
    throw Error(ErrorCode::kNoConsensus,
                "best RANSAC hypothesis has " + std::to_string(best_count) + " inliers");
  }
  Correspondences inliers;
  for (int i = 0; i < n; ++i)
    if (best_mask[i]) inliers.push_back(c[i]);
  RansacResult result;
  result.pose = solve_pnp(inliers, K);
  // Re-score against the refit so the mask reflects the returned pose.
  const auto errs = reprojection_errors(c, K, result.pose);
  result.inliers.assign(n, false);
  for (int i = 0; i < n; ++i) {
    result.inliers[i] = errs[i] < threshold_px;
    result.inlier_count += result.inliers[i] ? 1 : 0;
  }
  return result;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kParseError, where + ": bad number '" + s + "'");
  }
}

}  // namespace

Track2D load_track_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParseError, path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "t,u,v,visible") {
    throw Error(ErrorCode::kParseError, path + ": expected header t,u,v,visible");
  }
  Track2D track;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(row);
    const auto cells = split_csv(line);
    if (cells.size() != 4) throw Error(ErrorCode::kParseError, where + ": expected 4 columns");
    const double t = parse_double(cells[0], where);
    if (t != static_cast<double>(track.points.size())) {
      throw Error(ErrorCode::kParseError, where + ": rows must be t=0,1,2,...");
    }
    TrackPoint p;
    p.u = parse_double(cells[1], where);
    p.v = parse_double(cells[2], where);
    if (!std::isfinite(p.u) || !std::isfinite(p.v)) {
      throw Error(ErrorCode::kParseError, where + ": non-finite coordinate");
    }
    if (cells[3] == "1") {
      p.visible = true;
    } else if (cells[3] != "0") {
      throw Error(ErrorCode::kParseError, where + ": visible must be 0 or 1");
    }
    track.points.push_back(p);
  }
  return track;
}

void save_track_csv(const std::string& path, const Track2D& track) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << "t,u,v,visible\n" << std::setprecision(17);
  for (size_t t = 0; t < track.points.size(); ++t) {
    const auto& p = track.points[t];
    out << t << ',' << p.u << ',' << p.v << ',' << (p.visible ? 1 : 0) << '\n';
  }
}

}  // namespace calib
