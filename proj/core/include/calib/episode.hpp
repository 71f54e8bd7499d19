#pragma once

#include <optional>
#include <string>
#include <vector>

#include "calib/correspondence.hpp"
#include "calib/image.hpp"
#include "calib/kinematics.hpp"
#include "calib/se3.hpp"
#include "calib/temporal_pnp.hpp"

namespace calib {

/// Episode directory layout, relative to the episode root.
namespace layout {
inline constexpr const char* kFrames = "frames";
inline constexpr const char* kJoints = "joints.csv";
inline constexpr const char* kIntrinsics = "intrinsics.json";
inline constexpr const char* kRobot = "robot.json";
inline constexpr const char* kTrack = "track.csv";
inline constexpr const char* kMasks = "masks";
inline constexpr const char* kFrame0Features = "features/frame0.fmap";
inline constexpr const char* kReferenceFeatures = "features/reference.fmap";
inline constexpr const char* kReferenceMark = "reference_mark.json";
inline constexpr const char* kMark = "mark.json";
inline constexpr const char* kGtExtrinsic = "gt_extrinsic.json";
}  // namespace layout

/// "000042.png"
std::string frame_file_name(int t);

// joints.csv: header "t,q1..qn", one row per frame.
std::vector<JointState> load_joints_csv(const std::string& path);
void save_joints_csv(const std::string& path, const std::vector<JointState>& joints);

// intrinsics.json: {fx, fy, cx, cy, width, height}.
Intrinsics load_intrinsics(const std::string& path);
void save_intrinsics(const std::string& path, const Intrinsics& K);

/// A validated episode directory. Optional parts are only located here; the
/// large ones (masks, frames) are read on demand.
struct Episode {
  std::string dir;
  std::vector<std::string> frame_paths;
  std::vector<JointState> joints;
  Intrinsics K;
  RobotModel robot;
  std::optional<Extrinsic> gt_extrinsic;
  std::optional<Track2D> track;
  std::vector<std::string> mask_paths;  // empty when masks/ is absent
  std::optional<Mark> mark;
  bool has_features = false;  // frame0 + reference maps and reference mark

  int frame_count() const { return static_cast<int>(joints.size()); }
  std::string path(const std::string& rel) const;

  /// Target coverage for frame t. Throws kIoError when masks are absent.
  ImageF load_mask(int t) const;
};

/// Loads and cross-checks an episode. Throws Error naming the offending file:
/// kIoError for missing required files, kParseError, kLengthMismatch when
/// frames/joints/track/masks disagree in length, kShapeMismatch when image
/// sizes differ from the intrinsics, kJointDimensionMismatch, kTooFewVisible.
Episode load_episode(const std::string& dir);

}  // namespace calib
