#include "calib/kinematics.hpp"

#include <cmath>

#include "calib/error.hpp"

namespace calib {

void TriangleMesh::validate() const {
  for (const Vec3& v : vertices) {
    if (!v.allFinite()) {
      throw Error(ErrorCode::kInvalidArgument, "mesh has non-finite vertex");
    }
  }
  const int n = static_cast<int>(vertices.size());
  for (const auto& tri : triangles) {
    for (int idx : tri) {
      if (idx < 0 || idx >= n) {
        throw Error(ErrorCode::kInvalidArgument, "mesh index out of range");
      }
    }
  }
}

TriangleMesh TriangleMesh::transformed(const Extrinsic& T) const {
  TriangleMesh out;
  out.triangles = triangles;
  out.vertices.reserve(vertices.size());
  for (const Vec3& v : vertices) out.vertices.push_back(transform_point(T, v));
  return out;
}

int RobotModel::actuated_count() const {
  int n = 0;
  for (const LinkSpec& l : links) n += l.joint_type != JointType::kFixed;
  return n;
}

void RobotModel::validate() const {
  if (links.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "robot has no links");
  }
  if (eef_link_index < 0 || eef_link_index >= static_cast<int>(links.size())) {
    throw Error(ErrorCode::kInvalidArgument, "eef_link_index out of range");
  }
  if (!eef_offset.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "eef_offset not finite");
  }
  for (const LinkSpec& l : links) {
    const MdhParams& p = l.mdh;
    if (!std::isfinite(p.alpha_prev) || !std::isfinite(p.a_prev) ||
        !std::isfinite(p.d) || !std::isfinite(p.theta_offset)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "link '" + l.name + "' has non-finite MDH parameters");
    }
    l.mesh.validate();
  }
}

Extrinsic mdh_transform(const MdhParams& p, JointType type, double q) {
  double theta = p.theta_offset;
  double d = p.d;
  if (type == JointType::kRevolute) theta += q;
  if (type == JointType::kPrismatic) d += q;
  const double ca = std::cos(p.alpha_prev), sa = std::sin(p.alpha_prev);
  const double ct = std::cos(theta), st = std::sin(theta);
  Mat3 r;
  r << ct, -st, 0.0,
       st * ca, ct * ca, -sa,
       st * sa, ct * sa, ca;
  return Extrinsic(r, Vec3(p.a_prev, -sa * d, ca * d), 1e-6);
}

std::vector<Extrinsic> forward_kinematics(const RobotModel& model,
                                          const JointState& q) {
  if (static_cast<int>(q.q.size()) != model.actuated_count()) {
    throw Error(ErrorCode::kJointDimensionMismatch,
                "expected " + std::to_string(model.actuated_count()) +
                    " joint values, got " + std::to_string(q.q.size()));
  }
  std::vector<Extrinsic> poses;
  poses.reserve(model.links.size());
  Extrinsic acc;
  size_t j = 0;
  for (const LinkSpec& link : model.links) {
    double value = 0.0;
    if (link.joint_type != JointType::kFixed) value = q.q[j++];
    acc = acc * mdh_transform(link.mdh, link.joint_type, value);
    poses.push_back(acc);
  }
  return poses;
}

Vec3 eef_point(const RobotModel& model, const JointState& q) {
  const auto poses = forward_kinematics(model, q);
  return transform_point(poses[model.eef_link_index], model.eef_offset);
}

std::vector<TriangleMesh> posed_meshes(const RobotModel& model,
                                       const JointState& q) {
  const auto poses = forward_kinematics(model, q);
  std::vector<TriangleMesh> out;
  out.reserve(poses.size());
  for (size_t i = 0; i < poses.size(); ++i) {
    out.push_back(model.links[i].mesh.transformed(poses[i]));
  }
  return out;
}

std::string to_string(JointType type) {
  switch (type) {
    case JointType::kRevolute: return "revolute";
    case JointType::kPrismatic: return "prismatic";
    case JointType::kFixed: return "fixed";
  }
  return "revolute";
}

JointType joint_type_from_string(const std::string& s) {
  if (s == "revolute") return JointType::kRevolute;
  if (s == "prismatic") return JointType::kPrismatic;
  if (s == "fixed") return JointType::kFixed;
  throw Error(ErrorCode::kParseError, "unknown joint_type '" + s + "'");
}

}  // namespace calib
