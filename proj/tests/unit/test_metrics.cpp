#include "calib/metrics.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <array>
#include <cmath>

#include "calib/synth.hpp"
#include "test_util.hpp"

namespace calib {
namespace {

using test::error_code_of;

// Naive double loop over bins and samples.
double auc_brute_force(const std::vector<double>& d, double max_threshold, int bins) {
  double total = 0.0;
  for (int i = 0; i < bins; ++i) {
    const double thr = i * (max_threshold / bins);
    int pass = 0;
    for (double x : d)
      if (x < thr) ++pass;
    total += static_cast<double>(pass) / static_cast<double>(d.size());
  }
  return total / bins;
}

MetricConfig config(double max_thr = 0.10, int bins = 100) {
  MetricConfig c;
  c.eval_points = {Vec3::Zero()};
  c.auc_max_threshold = max_thr;
  c.auc_bins = bins;
  return c;
}

TEST(Auc, Anchors) {
  EXPECT_DOUBLE_EQ(auc_metric(std::vector<double>(50, 0.0), config()), 0.99);
  EXPECT_EQ(auc_metric({0.2, 0.1, 5.0}, config()), 0.0);
  // A distance exactly on a threshold does not pass that bin.
  EXPECT_EQ(auc_metric({0.5}, config(1.0, 4)), 0.25);
}

TEST(Auc, MatchesBruteForceExactly) {
  Rng rng = make_rng({61});
  std::uniform_real_distribution<double> u(0.0, 0.12);
  std::uniform_int_distribution<int> n(1, 300), bins(1, 200);
  for (int s = 0; s < 100; ++s) {
    std::vector<double> d(n(rng));
    for (double& x : d) x = u(rng);
    // Include exact bin edges.
    d.push_back(0.0);
    d.push_back(0.03);
    const int T = s % 2 ? 100 : bins(rng);
    EXPECT_EQ(auc_metric(d, config(0.1, T)), auc_brute_force(d, 0.1, T)) << s;
  }
}

TEST(Auc, Errors) {
  EXPECT_EQ(error_code_of([] { auc_metric({}, config()); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([] { auc_metric({-1.0}, config()); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([] { auc_metric({NAN}, config()); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([] { auc_metric({0.0}, config(0.0)); }), ErrorCode::kInvalidArgument);
}

TEST(Add, TranslationShiftGivesShift) {
  Rng rng = make_rng({62});
  const Extrinsic gt = test::random_pose(rng);
  const Extrinsic shifted(gt.rotation(), gt.translation() + Vec3(0.01, 0, 0));
  MetricConfig c = default_metric_config(make_arm(SynthArm::kSpatial6Dof));
  EXPECT_LE(c.eval_points.size(), static_cast<size_t>(kMaxEvalPoints));
  EXPECT_NEAR(add_metric(shifted, gt, c), 0.01, 1e-12);
  EXPECT_EQ(add_metric(gt, gt, c), 0.0);
  for (double d : add_distances(shifted, gt, c.eval_points)) EXPECT_NEAR(d, 0.01, 1e-12);
}

TEST(Add, DefaultEvalPointsSubsample) {
  const RobotModel arm = make_arm(SynthArm::kSpatial6Dof);
  const auto few = default_eval_points(arm, 50);
  EXPECT_LE(few.size(), 50u);
  EXPECT_GE(few.size(), 25u);
}

TEST(PoseErrorTest, Components) {
  const Extrinsic a;
  const Extrinsic b(exp_so3(Vec3(0, 0, kPi / 6)), Vec3(0, 0.03, 0.04));
  const PoseError e = pose_error(b, a);
  EXPECT_NEAR(e.rot_deg, 30.0, 1e-9);
  EXPECT_NEAR(e.pos_m, 0.05, 1e-15);
}

TEST(SampleNoise, MagnitudesInRange) {
  Rng rng = make_rng({63});
  for (int i = 0; i < 2000; ++i) {
    const PoseTangent d = sample_noise({2.0, 3.0}, {10.0, 15.0}, rng);
    const double deg = d.omega.norm() * 180.0 / kPi;
    const double cm = d.nu.norm() * 100.0;
    ASSERT_GE(deg, 10.0 - 1e-9);
    ASSERT_LE(deg, 15.0 + 1e-9);
    ASSERT_GE(cm, 2.0 - 1e-9);
    ASSERT_LE(cm, 3.0 + 1e-9);
  }
  EXPECT_EQ(error_code_of([&] { sample_noise({3.0, 2.0}, {0, 1}, rng); }),
            ErrorCode::kInvalidArgument);
}

TEST(SampleNoise, DirectionsUniformOnSphere) {
  // Octant counts of the rotation axis, chi-square with 7 dof.
  Rng rng = make_rng({64});
  const int n = 8000;
  std::array<int, 8> rot{}, pos{};
  for (int i = 0; i < n; ++i) {
    const PoseTangent d = sample_noise({1.0, 1.0}, {1.0, 1.0}, rng);
    auto octant = [](const Vec3& v) { return (v.x() > 0) | ((v.y() > 0) << 1) | ((v.z() > 0) << 2); };
    ++rot[octant(d.omega)];
    ++pos[octant(d.nu)];
  }
  auto chi2 = [&](const std::array<int, 8>& c) {
    double s = 0.0;
    for (int k : c) s += (k - n / 8.0) * (k - n / 8.0) / (n / 8.0);
    return s;
  };
  // 99.9th percentile of chi-square(7) is 24.3.
  EXPECT_LT(chi2(rot), 24.3);
  EXPECT_LT(chi2(pos), 24.3);
}

TEST(SampleNoise, MagnitudeUniform) {
  Rng rng = make_rng({65});
  const int n = 10000;
  std::array<int, 10> bins{};
  for (int i = 0; i < n; ++i) {
    const double deg = sample_noise({0, 1}, {20.0, 25.0}, rng).omega.norm() * 180.0 / kPi;
    ++bins[std::min(9, static_cast<int>((deg - 20.0) / 0.5))];
  }
  double s = 0.0;
  for (int k : bins) s += (k - n / 10.0) * (k - n / 10.0) / (n / 10.0);
  EXPECT_LT(s, 27.9);  // chi-square(9), 99.9%
}

TEST(Perturb, IsRetract) {
  Rng rng = make_rng({66});
  const Extrinsic gt = test::random_pose(rng);
  const PoseTangent d = sample_noise({1, 2}, {3, 4}, rng);
  EXPECT_EQ(perturb(gt, d), retract(gt, d));
  const PoseError e = pose_error(perturb(gt, d), gt);
  EXPECT_NEAR(e.rot_deg, d.omega.norm() * 180.0 / kPi, 1e-9);
  EXPECT_NEAR(e.pos_m, d.nu.norm(), 1e-15);
}

GridCellResult cell(NoiseRange rot, NoiseRange pos, double r, double p) {
  GridCellResult c;
  c.rot = rot;
  c.pos = pos;
  c.mean_rot_err = r;
  c.mean_pos_err = p;
  return c;
}

TEST(Verdict, Rules) {
  EXPECT_EQ(grid_verdict(cell({1, 5}, {0.1, 2.5}, 0.5, 0.05)), Verdict::kConverged);
  EXPECT_EQ(grid_verdict(cell({1, 5}, {0.1, 2.5}, 0.5, 0.5)), Verdict::kPartial);
  EXPECT_EQ(grid_verdict(cell({20, 25}, {10, 15}, 5.0, 4.0)), Verdict::kConverged);
  EXPECT_EQ(grid_verdict(cell({20, 25}, {10, 15}, 15.0, 12.0)), Verdict::kPartial);
  EXPECT_EQ(grid_verdict(cell({20, 25}, {10, 15}, 24.0, 5.0)), Verdict::kFailed);
  EXPECT_EQ(grid_verdict(cell({20, 25}, {10, 15}, 5.0, 13.0)), Verdict::kFailed);
  EXPECT_EQ(to_string(Verdict::kPartial), "partial");
}

TEST(GridSpec, Validation) {
  NoiseGridSpec s;
  EXPECT_EQ(error_code_of([&] { s.validate(); }), ErrorCode::kInvalidArgument);
  s.rot_ranges = {{1, 5}, {20, 25}};
  s.pos_ranges = {{0.1, 2.5}};
  EXPECT_NO_THROW(s.validate());
  s.diagonal = true;
  EXPECT_EQ(error_code_of([&] { s.validate(); }), ErrorCode::kInvalidArgument);
}

TEST(Grid, ZeroNoiseConvergesAndIsDeterministic) {
  GridScene scene;
  scene.model = make_arm(SynthArm::kSpatial6Dof);
  Rng rng = make_rng({67});
  const auto path = make_joint_path(scene.model, SynthArm::kSpatial6Dof, 20, rng);
  for (int f : uniform_frames(20, 4)) scene.frames.push_back(path[f]);
  scene.K = make_intrinsics(160, 120, 150.0);
  NoiseGridSpec spec;
  spec.rot_ranges = {{0, 0}};
  spec.pos_ranges = {{0, 0}};
  spec.n_poses = 2;
  spec.m_samples = 2;
  RefineConfig cfg;
  cfg.supersample = 2;
  cfg.max_iters = 300;
  const auto a = convergence_grid(scene, spec, cfg);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0].verdict, Verdict::kConverged);
  EXPECT_LT(a[0].mean_rot_err, 0.05);
  const auto b = convergence_grid(scene, spec, cfg);
  EXPECT_EQ(a[0].mean_rot_err, b[0].mean_rot_err);
  EXPECT_EQ(a[0].mean_pos_err, b[0].mean_pos_err);
}

TEST(Grid, TableAndCsv) {
  std::vector<GridCellResult> cells = {cell({1, 5}, {0.1, 2.5}, 0.5, 0.05),
                                       cell({20, 25}, {10, 15}, 24.0, 12.0)};
  for (auto& c : cells) c.verdict = grid_verdict(c);
  const std::string t = grid_table(cells);
  EXPECT_NE(t.find("1-5"), std::string::npos);
  EXPECT_NE(t.find("[failed]"), std::string::npos);
  test::TempDir dir;
  save_grid_csv(dir.file("g.csv"), cells);
  const std::string csv = test::read_file(dir.file("g.csv"));
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "rot_lo,rot_hi,pos_lo,pos_hi,mean_rot,std_rot,mean_pos,std_pos,verdict");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

}  // namespace
}  // namespace calib
