#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "calib/image.hpp"
#include "calib/kinematics.hpp"
#include "calib/provenance.hpp"
#include "calib/renderer.hpp"
#include "calib/se3.hpp"

namespace calib {

inline constexpr int kDefaultRefineFrames = 4;

/// kAdam scales each tangent coordinate by its running gradient magnitude
/// (beta1 0.9, beta2 0.999); kGradientDescent steps along -lr * g.
enum class Optimizer { kAdam, kGradientDescent };
std::string to_string(Optimizer o);
/// "adam" or "gd". Throws kInvalidArgument.
Optimizer optimizer_from_string(const std::string& s);

struct RefineConfig {
  Optimizer optimizer = Optimizer::kAdam;
  double learning_rate = 1e-4;
  /// Pulls the accumulated tangent (displacement from the initial pose)
  /// back toward zero.
  double weight_decay = 1e-6;
  int max_iters = 10000;
  double fd_step_rot = 1e-4;    // rad
  double fd_step_trans = 1e-4;  // m
  /// Constraint frames; empty means kDefaultRefineFrames uniformly spaced.
  std::vector<int> frames;
  int supersample = kDefaultSupersample;
  bool safeguard = true;
  /// Loss-plateau stop: improvement below `plateau_tol` for `plateau_iters`
  /// consecutive iterations.
  double plateau_tol = 1e-10;
  int plateau_iters = 200;
  /// Step halvings tried before a safeguarded step is rejected.
  int max_halvings = 10;

  /// Throws kInvalidArgument.
  void validate(int frame_count) const;
  /// `frames`, or the uniform default for an episode of `frame_count`.
  std::vector<int> resolved_frames(int frame_count) const;
};

/// round(k * (T - 1) / (n - 1)) for k = 0..n-1, deduplicated.
std::vector<int> uniform_frames(int frame_count, int n);

struct RefineReport {
  Extrinsic final_extrinsic;
  std::vector<double> loss_history;
  int iters_run = 0;
  bool converged = false;
  int empty_render_events = 0;
  /// Every probe around the pose rendered nothing; the run stopped there.
  bool zero_gradient = false;
};

/// Mean over frames of the mean per-pixel squared difference. Throws
/// kShapeMismatch.
double mask_loss(const std::vector<ImageF>& targets,
                 const std::vector<ImageF>& rendered);

struct LossSample {
  double value = 0.0;
  bool empty = false;  // nothing rendered in any frame
};

using LossFn = std::function<LossSample(const Extrinsic&)>;

struct GradientSample {
  PoseTangent gradient;  // omega: d/d(rotation), nu: d/d(translation)
  LossSample center;
  int empty_probes = 0;
};

/// Central differences along the six tangent directions. `center` skips the
/// evaluation at T when the caller already has it. Throws kZeroGradientRegion
/// when the center and all twelve probes are empty.
GradientSample fd_gradient(const LossFn& loss, const Extrinsic& T,
                           const RefineConfig& cfg,
                           std::optional<LossSample> center = std::nullopt);

/// Multi-frame silhouette loss against fixed targets. Scenes are posed once;
/// each call only re-rasterizes.
class MaskLoss {
 public:
  MaskLoss(const RobotModel& model, const std::vector<JointState>& joints,
           const std::vector<ImageF>& targets, const Intrinsics& K, int ss);

  LossSample operator()(const Extrinsic& T);
  int frame_count() const { return static_cast<int>(scenes_.size()); }

 private:
  std::vector<RenderScene> scenes_;
  std::vector<ImageF> targets_;
  std::vector<double> target_sq_;
  CoverageRasterizer raster_;
};

/// First-order descent on `loss` from T0. The step is -lr * direction minus
/// weight_decay times the accumulated tangent. With the safeguard on, a step
/// that raises the loss is retried at half the rate; if none of the halvings
/// help, the pose stays put for that iteration.
RefineReport refine(const LossFn& loss, const Extrinsic& T0, const RefineConfig& cfg);

/// Convenience wrapper: `targets[i]` is the target coverage for frame
/// `cfg.resolved_frames(joints.size())[i]`.
RefineReport refine(const RobotModel& model, const std::vector<JointState>& joints,
                    const Intrinsics& K, const std::vector<ImageF>& targets,
                    const Extrinsic& T0, const RefineConfig& cfg);

void save_refine_report(const std::string& path, const RefineReport& report,
                        const Provenance& prov);
void save_loss_curve_csv(const std::string& path, const RefineReport& report);

}  // namespace calib
