#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "calib/correspondence.hpp"
#include "calib/image.hpp"
#include "calib/kinematics.hpp"
#include "calib/random.hpp"
#include "calib/se3.hpp"
#include "calib/temporal_pnp.hpp"

namespace calib {

enum class SynthArm { kSingleLink, kPlanar3Dof, kSpatial6Dof };

enum class MaskNoiseKind { kNone, kDilate, kErode, kSpeckle };

/// "none", "dilate_<k>", "erode_<k>" (k pixels) or "speckle_<p>" (flip
/// probability).
struct MaskNoise {
  MaskNoiseKind kind = MaskNoiseKind::kNone;
  double amount = 0.0;

  static MaskNoise parse(const std::string& s);
  std::string to_string() const;
};

struct SynthSpec {
  SynthArm arm = SynthArm::kSpatial6Dof;
  int n_frames = 60;
  double camera_distance = 1.5;  // m
  double track_noise_px = 0.0;
  Vec3 mark_offset = Vec3(0.0, 0.0, 0.02);  // m, tool frame
  MaskNoise mask_noise;
  std::uint64_t seed = 0;
  int width = 320;
  int height = 240;
  double focal_px = 300.0;
  int supersample = 4;  // for the emitted masks

  /// Throws kInvalidArgument.
  void validate() const;
};

std::string to_string(SynthArm arm);
SynthArm synth_arm_from_string(const std::string& s);

inline constexpr int kMaxPlacementTries = 1000;
inline constexpr double kMinPlacementCoverage = 0.01;
inline constexpr int kFeatureChannels = 4;

RobotModel make_arm(SynthArm arm);

/// Smooth joint path: one sinusoid per joint at distinct frequencies, phases
/// drawn from `rng`.
std::vector<JointState> make_joint_path(const RobotModel& model, SynthArm arm,
                                        int n_frames, Rng& rng);

/// Intrinsics with the principal point at the image center.
Intrinsics make_intrinsics(int width, int height, double focal_px);

/// Rejection-samples a look-at camera around the workspace at `distance`
/// until every frame in `check_frames` covers more than 1% of the image and
/// every point of `must_see` projects inside it. Throws kPlacementFailure
/// after 1000 tries.
Extrinsic sample_camera(const RobotModel& model,
                        const std::vector<JointState>& check_frames,
                        const std::vector<Vec3>& must_see, const Intrinsics& K,
                        double distance, Rng& rng);

/// Everything a synthetic episode contains, in memory.
struct SynthEpisode {
  SynthSpec spec;
  RobotModel model;
  std::vector<JointState> joints;
  Intrinsics K;
  Extrinsic gt;
  std::vector<Vec3> mark_path;  // base frame, per frame
  Track2D track;
  std::vector<ImageF> clean_masks;  // coverage at gt
  std::vector<ImageF> masks;        // after mask noise
  FeatureMap frame0_features;
  FeatureMap reference_features;
  Mark reference_mark;
  Mark frame0_mark;  // where propagation should land
};

SynthEpisode make_synth_episode(const SynthSpec& spec);

/// Applies mask noise to a coverage image. Speckle flips v -> 1 - v.
ImageF corrupt_mask(const ImageF& coverage, const MaskNoise& noise, Rng& rng);

/// Writes the episode directory: frames/, joints.csv, intrinsics.json,
/// robot.json + meshes/, track.csv, masks/, features/frame0.fmap,
/// features/reference.fmap, reference_mark.json, gt_extrinsic.json.
void write_synth_episode(const std::string& dir, const SynthEpisode& ep);

/// make_synth_episode followed by write_synth_episode.
SynthEpisode generate_episode(const SynthSpec& spec, const std::string& dir);

/// Flat grey render of a coverage image as an RGB frame.
ImageRgb coverage_to_frame(const ImageF& coverage);

}  // namespace calib
