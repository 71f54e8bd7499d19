#include "calib/kinematics.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "calib/synth.hpp"
#include "test_util.hpp"

namespace calib {
namespace {

using test::error_code_of;

// Matrix-product oracle: RotX(alpha) TransX(a) RotZ(theta) TransZ(d).
Mat4 oracle_link(const MdhParams& p, JointType type, double q) {
  const double theta = p.theta_offset + (type == JointType::kRevolute ? q : 0.0);
  const double d = p.d + (type == JointType::kPrismatic ? q : 0.0);
  Eigen::Affine3d rx(Eigen::AngleAxisd(p.alpha_prev, Vec3::UnitX()));
  Eigen::Affine3d tx(Eigen::Translation3d(p.a_prev, 0, 0));
  Eigen::Affine3d rz(Eigen::AngleAxisd(theta, Vec3::UnitZ()));
  Eigen::Affine3d tz(Eigen::Translation3d(0, 0, d));
  return (rx * tx * rz * tz).matrix();
}

std::vector<Mat4> oracle_fk(const RobotModel& m, const JointState& q) {
  std::vector<Mat4> out;
  Mat4 acc = Mat4::Identity();
  size_t j = 0;
  for (const auto& l : m.links) {
    const double v = l.joint_type == JointType::kFixed ? 0.0 : q.q[j++];
    acc = acc * oracle_link(l.mdh, l.joint_type, v);
    out.push_back(acc);
  }
  return out;
}

RobotModel random_chain(Rng& rng, int n_links, bool mixed_types) {
  std::uniform_real_distribution<double> ang(-kPi, kPi), len(-0.5, 0.5);
  std::uniform_int_distribution<int> kind(0, 2);
  RobotModel m;
  for (int i = 0; i < n_links; ++i) {
    LinkSpec l;
    l.name = "l" + std::to_string(i);
    l.mdh = {ang(rng), len(rng), len(rng), ang(rng)};
    if (mixed_types) l.joint_type = static_cast<JointType>(kind(rng));
    m.links.push_back(l);
  }
  m.eef_link_index = n_links - 1;
  m.eef_offset = Vec3(0.01, 0.02, 0.03);
  return m;
}

JointState random_state(const RobotModel& m, Rng& rng) {
  std::uniform_real_distribution<double> u(-kPi, kPi);
  JointState q;
  for (int i = 0; i < m.actuated_count(); ++i) q.q.push_back(u(rng));
  return q;
}

TEST(ForwardKinematics, MatchesMatrixProductOracle) {
  Rng rng = make_rng({11});
  const RobotModel m = random_chain(rng, 7, false);
  for (int s = 0; s < 1000; ++s) {
    const JointState q = random_state(m, rng);
    const auto fk = forward_kinematics(m, q);
    const auto ref = oracle_fk(m, q);
    ASSERT_EQ(fk.size(), ref.size());
    for (size_t i = 0; i < fk.size(); ++i) {
      EXPECT_LT((fk[i].matrix() - ref[i]).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(ForwardKinematics, MixedJointTypes) {
  Rng rng = make_rng({12});
  for (int trial = 0; trial < 20; ++trial) {
    const RobotModel m = random_chain(rng, 6, true);
    const JointState q = random_state(m, rng);
    const auto fk = forward_kinematics(m, q);
    const auto ref = oracle_fk(m, q);
    for (size_t i = 0; i < fk.size(); ++i) {
      EXPECT_LT((fk[i].matrix() - ref[i]).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(ForwardKinematics, PrismaticMovesAlongZ) {
  RobotModel m;
  LinkSpec l;
  l.joint_type = JointType::kPrismatic;
  l.mdh.d = 0.1;
  m.links.push_back(l);
  const auto fk = forward_kinematics(m, JointState{{0.25}, 0});
  EXPECT_LT((fk[0].translation() - Vec3(0, 0, 0.35)).norm(), 1e-15);
  EXPECT_EQ(fk[0].rotation(), Mat3::Identity());
}

TEST(ForwardKinematics, DimensionMismatch) {
  Rng rng = make_rng({13});
  const RobotModel m = random_chain(rng, 3, false);
  EXPECT_EQ(error_code_of([&] { forward_kinematics(m, JointState{{0.0, 0.0}, 0}); }),
            ErrorCode::kJointDimensionMismatch);
  EXPECT_EQ(error_code_of([&] { forward_kinematics(m, JointState{{0, 0, 0, 0}, 0}); }),
            ErrorCode::kJointDimensionMismatch);
}

TEST(ForwardKinematics, EefPoint) {
  Rng rng = make_rng({14});
  const RobotModel m = random_chain(rng, 5, false);
  const JointState q = random_state(m, rng);
  const Mat4 last = oracle_fk(m, q).back();
  const Vec3 expect = last.topLeftCorner<3, 3>() * m.eef_offset + last.topRightCorner<3, 1>();
  EXPECT_LT((eef_point(m, q) - expect).norm(), 1e-12);
}

TEST(PosedMeshes, RigidPerLink) {
  const RobotModel m = make_arm(SynthArm::kSpatial6Dof);
  Rng rng = make_rng({15});
  const JointState q = random_state(m, rng);
  const auto posed = posed_meshes(m, q);
  ASSERT_EQ(posed.size(), m.links.size());
  for (size_t i = 0; i < posed.size(); ++i) {
    const auto& a = m.links[i].mesh.vertices;
    const auto& b = posed[i].vertices;
    ASSERT_EQ(a.size(), b.size());
    EXPECT_EQ(posed[i].triangles, m.links[i].mesh.triangles);
    for (size_t u = 0; u < a.size(); u += 7) {
      for (size_t v = u + 1; v < a.size(); v += 5) {
        EXPECT_NEAR((a[u] - a[v]).norm(), (b[u] - b[v]).norm(), 1e-9);
      }
    }
  }
}

TEST(RobotModel, Validate) {
  RobotModel m;
  EXPECT_EQ(error_code_of([&] { m.validate(); }), ErrorCode::kInvalidArgument);
  m.links.push_back(LinkSpec{});
  m.eef_link_index = 1;
  EXPECT_EQ(error_code_of([&] { m.validate(); }), ErrorCode::kInvalidArgument);
  m.eef_link_index = 0;
  EXPECT_NO_THROW(m.validate());
  m.links[0].mdh.d = NAN;
  EXPECT_EQ(error_code_of([&] { m.validate(); }), ErrorCode::kInvalidArgument);
}

TEST(TriangleMesh, Validate) {
  TriangleMesh mesh;
  mesh.vertices = {Vec3::Zero(), Vec3::UnitX(), Vec3::UnitY()};
  mesh.triangles = {{0, 1, 3}};
  EXPECT_EQ(error_code_of([&] { mesh.validate(); }), ErrorCode::kInvalidArgument);
  mesh.triangles = {{0, 1, 2}};
  mesh.vertices[1].x() = INFINITY;
  EXPECT_EQ(error_code_of([&] { mesh.validate(); }), ErrorCode::kInvalidArgument);
}

TEST(Obj, ParsesQuadsAndNegativeIndices) {
  const TriangleMesh m = parse_obj(
      "# square\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\n"
      "f 1/1/1 2/2/1 3/3/1 4/4/1\nf -4 -3 -2\n");
  ASSERT_EQ(m.vertices.size(), 4u);
  ASSERT_EQ(m.triangles.size(), 3u);
  EXPECT_EQ(m.triangles[0], (std::array<int, 3>{0, 1, 2}));
  EXPECT_EQ(m.triangles[1], (std::array<int, 3>{0, 2, 3}));
  EXPECT_EQ(m.triangles[2], (std::array<int, 3>{0, 1, 2}));
}

TEST(Obj, Errors) {
  EXPECT_EQ(error_code_of([] { parse_obj("v 0 0\n"); }), ErrorCode::kParseError);
  EXPECT_EQ(error_code_of([] { parse_obj("v 0 0 0\nv 1 0 0\nf 1 2\n"); }),
            ErrorCode::kParseError);
  EXPECT_EQ(error_code_of([] { parse_obj("v 0 0 0\nf 1 2 3\n"); }), ErrorCode::kParseError);
  EXPECT_EQ(error_code_of([] { load_obj("/nonexistent.obj"); }), ErrorCode::kIoError);
}

TEST(RobotJson, RoundTripPreservesKinematicsAndMeshes) {
  test::TempDir dir;
  const RobotModel m = make_arm(SynthArm::kSpatial6Dof);
  save_robot(dir.file("robot.json"), m);
  const RobotModel back = load_robot(dir.file("robot.json"));
  ASSERT_EQ(back.links.size(), m.links.size());
  EXPECT_EQ(back.eef_link_index, m.eef_link_index);
  Rng rng = make_rng({16});
  for (int s = 0; s < 10; ++s) {
    const JointState q = random_state(m, rng);
    const auto a = forward_kinematics(m, q), b = forward_kinematics(back, q);
    for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], b[i]);
  }
  for (size_t i = 0; i < m.links.size(); ++i) {
    EXPECT_EQ(back.links[i].mesh.vertices, m.links[i].mesh.vertices);
    EXPECT_EQ(back.links[i].mesh.triangles, m.links[i].mesh.triangles);
    EXPECT_EQ(back.links[i].joint_type, m.links[i].joint_type);
  }
}

TEST(RobotJson, RejectsOtherConvention) {
  test::TempDir dir;
  test::write_file(dir.file("robot.json"),
                   R"({"convention": "dh_standard", "links": [], "eef_link_index": 0})");
  EXPECT_EQ(error_code_of([&] { load_robot(dir.file("robot.json")); }),
            ErrorCode::kConventionMismatch);
  test::write_file(dir.file("bad.json"), "{");
  EXPECT_EQ(error_code_of([&] { load_robot(dir.file("bad.json")); }), ErrorCode::kParseError);
}

TEST(JointType, StringRoundTrip) {
  for (JointType t : {JointType::kRevolute, JointType::kPrismatic, JointType::kFixed}) {
    EXPECT_EQ(joint_type_from_string(to_string(t)), t);
  }
}

}  // namespace
}  // namespace calib
