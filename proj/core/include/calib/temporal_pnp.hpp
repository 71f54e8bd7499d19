#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calib/kinematics.hpp"
#include "calib/se3.hpp"

namespace calib {

inline constexpr int kMinCorrespondences = 6;
inline constexpr int kMaxPnpFrames = 200;
inline constexpr double kDefaultRansacThresholdPx = 8.0;
inline constexpr int kDefaultRansacIterations = 500;

struct TrackPoint {
  double u = 0.0;
  double v = 0.0;
  bool visible = false;
};

/// Tracked mark position per frame.
struct Track2D {
  std::vector<TrackPoint> points;

  /// Throws kLengthMismatch when the length differs from `frame_count` and
  /// kOutOfBounds when a visible point lies outside the image.
  void validate(int frame_count, const Intrinsics& K) const;
};

struct Correspondence {
  Vec2 p2d = Vec2::Zero();  // px
  Vec3 p3d = Vec3::Zero();  // m, base frame
  int t = 0;
};

using Correspondences = std::vector<Correspondence>;

/// One pair per visible frame with p3d = eef_point(model, q_t), in frame
/// order. Throws kLengthMismatch, kTooFewVisible (< 6).
Correspondences build_correspondences(const Track2D& track,
                                      const RobotModel& model,
                                      const std::vector<JointState>& joints);

/// At most `max_pairs` uniformly spaced pairs (first and last kept).
Correspondences subsample_uniform(const Correspondences& c,
                                  int max_pairs = kMaxPnpFrames);

/// Closed-form estimate only (EPnP, or a homography decomposition when the
/// 3D points are planar), best candidate with all points in front of the
/// camera. Throws kDegenerateGeometry, kSolverFailure.
Extrinsic solve_epnp(const Correspondences& c, const Intrinsics& K);

/// Closed form followed by Levenberg-Marquardt on the reprojection error.
/// The result never has a larger residual than the closed-form estimate.
Extrinsic solve_pnp(const Correspondences& c, const Intrinsics& K);

/// Sum of squared pixel residuals; points behind the camera add 1e12 each.
double reprojection_sse(const Correspondences& c, const Intrinsics& K,
                        const Extrinsic& T);
std::vector<double> reprojection_errors(const Correspondences& c,
                                        const Intrinsics& K,
                                        const Extrinsic& T);

struct RansacResult {
  Extrinsic pose;
  std::vector<bool> inliers;
  int inlier_count = 0;
};

/// RANSAC over 6-point subsets with a per-iteration counter-based RNG, then a
/// refit on the inliers. Throws kNoConsensus when fewer than 6 inliers.
RansacResult solve_pnp_ransac(const Correspondences& c, const Intrinsics& K,
                              double threshold_px = kDefaultRansacThresholdPx,
                              int iterations = kDefaultRansacIterations,
                              std::uint64_t seed = 0);

// track.csv: header "t,u,v,visible", one row per frame.
Track2D load_track_csv(const std::string& path);
void save_track_csv(const std::string& path, const Track2D& track);

}  // namespace calib
