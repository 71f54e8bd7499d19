#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calib/kinematics.hpp"
#include "calib/random.hpp"
#include "calib/refiner.hpp"
#include "calib/se3.hpp"

namespace calib {

inline constexpr int kMaxEvalPoints = 2000;

struct MetricConfig {
  std::vector<Vec3> eval_points;  // m, base frame
  double auc_max_threshold = 0.10;  // m
  int auc_bins = 100;

  /// Throws kInvalidArgument.
  void validate() const;
};

/// Mesh vertices at the zero joint state, base frame, every k-th vertex so at
/// most `max_points` remain.
std::vector<Vec3> default_eval_points(const RobotModel& model, int max_points = kMaxEvalPoints);
MetricConfig default_metric_config(const RobotModel& model);

/// Per-point displacement ||T_pred p - T_gt p||.
std::vector<double> add_distances(const Extrinsic& pred, const Extrinsic& gt,
                                  const std::vector<Vec3>& points);
double add_metric(const Extrinsic& pred, const Extrinsic& gt, const MetricConfig& cfg);

/// Mean over bins i = 0..T-1 of the fraction of distances strictly below
/// i * max / T.
double auc_metric(const std::vector<double>& distances, const MetricConfig& cfg);

struct PoseError {
  double rot_deg = 0.0;
  double pos_m = 0.0;  // distance between translation columns
};
PoseError pose_error(const Extrinsic& pred, const Extrinsic& gt);

struct NoiseRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Random direction (uniform on the sphere) scaled by a magnitude uniform in
/// the range, for both parts. `pos_cm` is in cm, the returned nu in m.
PoseTangent sample_noise(NoiseRange pos_cm, NoiseRange rot_deg, Rng& rng);

/// Initial pose for one grid sample: rotation noise left-multiplied onto R,
/// position noise added to t, i.e. retract(gt, noise).
Extrinsic perturb(const Extrinsic& gt, const PoseTangent& noise);

struct NoiseGridSpec {
  std::vector<NoiseRange> pos_ranges;  // cm
  std::vector<NoiseRange> rot_ranges;  // deg
  int n_poses = 20;
  int m_samples = 20;
  std::uint64_t seed = 0;
  /// Pair rot_ranges[k] with pos_ranges[k] instead of taking all
  /// combinations.
  bool diagonal = false;

  void validate() const;
};

enum class Verdict { kConverged, kPartial, kFailed };
std::string to_string(Verdict v);

struct GridCellResult {
  NoiseRange rot;  // deg
  NoiseRange pos;  // cm
  double mean_rot_err = 0.0;  // deg
  double std_rot_err = 0.0;
  double mean_pos_err = 0.0;  // cm
  double std_pos_err = 0.0;
  Verdict verdict = Verdict::kFailed;
  int failed_samples = 0;  // refinements that collapsed or threw
};

/// Scene the grid samples ground-truth cameras around.
struct GridScene {
  RobotModel model;
  std::vector<JointState> frames;  // constraint frames
  Intrinsics K;
  double camera_distance = 1.5;  // m
};

/// converged: mean errors < 1 deg and < 0.1 cm, or both below the mean
/// injected noise and below the cell's lower bound. failed: either mean
/// error above the mean injected noise. Otherwise partial.
Verdict grid_verdict(const GridCellResult& cell);

/// Cells in row-major order (rotation ranges outer) unless diagonal.
std::vector<GridCellResult> convergence_grid(const GridScene& scene,
                                             const NoiseGridSpec& spec,
                                             const RefineConfig& cfg);

void save_grid_csv(const std::string& path, const std::vector<GridCellResult>& cells);
/// Rotation ranges as rows, position ranges as columns; each entry shows
/// rotation error over position error.
std::string grid_table(const std::vector<GridCellResult>& cells);

}  // namespace calib
