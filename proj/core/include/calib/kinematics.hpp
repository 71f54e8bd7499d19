#pragma once

#include <array>
#include <string>
#include <vector>

#include "calib/se3.hpp"

namespace calib {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;

  /// Throws kInvalidArgument on non-finite vertices or out-of-range indices.
  void validate() const;
  TriangleMesh transformed(const Extrinsic& T) const;
};

enum class JointType { kRevolute, kPrismatic, kFixed };

/// Modified (Craig) DH parameters of the transform from the previous link.
struct MdhParams {
  double alpha_prev = 0.0;  // rad
  double a_prev = 0.0;      // m
  double d = 0.0;           // m
  double theta_offset = 0.0;  // rad
};

struct LinkSpec {
  std::string name;
  MdhParams mdh;
  JointType joint_type = JointType::kRevolute;
  TriangleMesh mesh;
};

struct JointState {
  std::vector<double> q;
  int t = 0;
};

struct RobotModel {
  std::vector<LinkSpec> links;
  int eef_link_index = 0;
  Vec3 eef_offset = Vec3::Zero();

  int actuated_count() const;
  void validate() const;
};

/// Single MDH link transform:
/// RotX(alpha_prev) TransX(a_prev) RotZ(theta_offset + q) TransZ(d),
/// with q added to d instead of theta for prismatic joints and ignored for
/// fixed joints.
Extrinsic mdh_transform(const MdhParams& p, JointType type, double q);

/// Base-from-link pose for every link. Throws kJointDimensionMismatch.
std::vector<Extrinsic> forward_kinematics(const RobotModel& model,
                                          const JointState& q);

Vec3 eef_point(const RobotModel& model, const JointState& q);

/// Link meshes mapped into the base frame; topology unchanged.
std::vector<TriangleMesh> posed_meshes(const RobotModel& model,
                                       const JointState& q);

std::string to_string(JointType type);
JointType joint_type_from_string(const std::string& s);

// Wavefront OBJ (v / f records only; polygons are fan-triangulated).
TriangleMesh load_obj(const std::string& path);
TriangleMesh parse_obj(const std::string& text);
void save_obj(const std::string& path, const TriangleMesh& mesh);

/// robot.json with "convention": "mdh_craig"; mesh paths are resolved
/// relative to the JSON file.
RobotModel load_robot(const std::string& path);
/// Writes robot.json plus one OBJ per link (meshes/<name>.obj) next to it.
void save_robot(const std::string& path, const RobotModel& model);

}  // namespace calib
