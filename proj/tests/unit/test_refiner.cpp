#include "calib/refiner.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <json.hpp>

#include "calib/metrics.hpp"
#include "calib/synth.hpp"
#include "fd_check.hpp"
#include "test_util.hpp"

namespace calib {
namespace {

using test::error_code_of;

// Four clean target masks from a small synthetic episode.
struct Fixture {
  SynthEpisode ep;
  std::vector<JointState> joints;
  std::vector<ImageF> targets;
  RefineConfig cfg;

  explicit Fixture(std::uint64_t seed, int ss = 2) {
    SynthSpec spec;
    spec.n_frames = 20;
    spec.seed = seed;
    spec.supersample = ss;
    ep = make_synth_episode(spec);
    cfg.supersample = ss;
    for (int f : cfg.resolved_frames(spec.n_frames)) {
      joints.push_back(ep.joints[f]);
      targets.push_back(ep.clean_masks[f]);
    }
  }
};

PoseTangent offset(double deg, double cm, std::uint64_t seed) {
  Rng rng = make_rng({seed});
  PoseTangent d;
  d.omega = test::random_unit(rng) * (deg * kPi / 180.0);
  d.nu = test::random_unit(rng) * (cm * 0.01);
  return d;
}

bool non_increasing(const std::vector<double>& h) {
  for (size_t i = 1; i < h.size(); ++i)
    if (h[i] > h[i - 1]) return false;
  return true;
}

TEST(MaskLoss, Anchors) {
  ImageF ones(4, 2, 1.0f), zeros(4, 2, 0.0f), half(4, 2, 0.0f);
  for (int x = 0; x < 4; ++x) half.at(x, 0) = 1.0f;
  EXPECT_EQ(mask_loss({ones}, {ones}), 0.0);
  EXPECT_EQ(mask_loss({ones}, {zeros}), 1.0);
  EXPECT_EQ(mask_loss({ones}, {half}), 0.5);
  EXPECT_EQ(mask_loss({ones, ones}, {zeros, ones}), 0.5);
  EXPECT_EQ(error_code_of([&] { mask_loss({ones}, {ImageF(3, 2)}); }), ErrorCode::kShapeMismatch);
  EXPECT_EQ(error_code_of([&] { mask_loss({ones}, {}); }), ErrorCode::kShapeMismatch);
}

TEST(MaskLoss, MatchesFullRenderLoss) {
  Fixture fx(3);
  MaskLoss loss(fx.ep.model, fx.joints, fx.targets, fx.ep.K, 2);
  const Extrinsic T = retract(fx.ep.gt, offset(2.0, 1.0, 1));
  std::vector<ImageF> rendered;
  for (const auto& q : fx.joints) rendered.push_back(render(fx.ep.model, q, T, fx.ep.K, 2).coverage);
  EXPECT_NEAR(loss(T).value, mask_loss(fx.targets, rendered), 1e-12);
  EXPECT_EQ(loss(fx.ep.gt).value, 0.0);
}

TEST(FdGradient, QuadraticMatchesClosedForm) {
  Rng rng = make_rng({51});
  for (int i = 0; i < 50; ++i) {
    const test::QuadraticLoss q{test::random_pose(rng)};
    const Extrinsic T = retract(q.target, offset(20.0, 30.0, 100 + i));
    const GradientSample g = fd_gradient([&](const Extrinsic& X) { return q(X); }, T, RefineConfig{});
    const Vec6 exact = q.gradient(T);
    EXPECT_LT((g.gradient.to_vector() - exact).norm() / exact.norm(), 1e-6);
    EXPECT_EQ(g.center.value, q(T).value);
  }
}

TEST(FdGradient, VanishesAtOptimum) {
  Rng rng = make_rng({52});
  const test::QuadraticLoss q{test::random_pose(rng)};
  const GradientSample g =
      fd_gradient([&](const Extrinsic& X) { return q(X); }, q.target, RefineConfig{});
  EXPECT_LT(g.gradient.to_vector().norm(), 1e-8);
}

TEST(FdGradient, RenderedLossForwardAndCentralAgree) {
  Fixture fx(0, 4);
  MaskLoss loss(fx.ep.model, fx.joints, fx.targets, fx.ep.K, 4);
  const LossFn fn = [&](const Extrinsic& T) { return loss(T); };
  const Extrinsic T = retract(fx.ep.gt, offset(1.5, 1.5, 2));
  const test::FdComparison coarse = test::compare_fd(fn, T, 1e-3);
  const test::FdComparison fine = test::compare_fd(fn, T, 1e-4);
  EXPECT_LT(coarse.gap(), 0.25);
  EXPECT_LT(fine.gap(), 0.25);
  EXPECT_LT((coarse.central - fine.central).norm() / coarse.central.norm(), 0.25);
}

TEST(FdGradient, ZeroGradientRegion) {
  const LossFn empty = [](const Extrinsic&) { return LossSample{0.25, true}; };
  EXPECT_EQ(error_code_of([&] { fd_gradient(empty, Extrinsic(), RefineConfig{}); }),
            ErrorCode::kZeroGradientRegion);
}

TEST(Refine, QuadraticConvergesWithBothOptimizers) {
  Rng rng = make_rng({53});
  const test::QuadraticLoss q{test::random_pose(rng)};
  const LossFn fn = [&](const Extrinsic& X) { return q(X); };
  for (Optimizer o : {Optimizer::kAdam, Optimizer::kGradientDescent}) {
    RefineConfig cfg;
    cfg.optimizer = o;
    cfg.learning_rate = o == Optimizer::kAdam ? 1e-3 : 0.1;
    cfg.weight_decay = 0.0;
    const Extrinsic T0 = retract(q.target, offset(5.0, 3.0, 54));
    const RefineReport r = refine(fn, T0, cfg);
    const PoseError e = pose_error(r.final_extrinsic, q.target);
    EXPECT_LT(e.rot_deg, 0.01) << to_string(o);
    EXPECT_LT(e.pos_m, 1e-4) << to_string(o);
    EXPECT_TRUE(non_increasing(r.loss_history)) << to_string(o);
    EXPECT_EQ(r.loss_history.size(), static_cast<size_t>(r.iters_run) + 1);
  }
}

TEST(Refine, GroundTruthIsAFixedPoint) {
  Fixture fx(1);
  fx.cfg.max_iters = 400;
  const RefineReport r = refine(fx.ep.model, fx.ep.joints, fx.ep.K, fx.targets, fx.ep.gt, fx.cfg);
  const PoseError e = pose_error(r.final_extrinsic, fx.ep.gt);
  EXPECT_LT(e.rot_deg, 0.05);
  EXPECT_LT(e.pos_m * 100.0, 0.05);
  EXPECT_EQ(r.loss_history.back(), 0.0);
}

TEST(Refine, RecoversFromSmallOffset) {
  Fixture fx(2);
  const Extrinsic T0 = retract(fx.ep.gt, offset(3.0, 1.5, 3));
  const RefineReport r = refine(fx.ep.model, fx.ep.joints, fx.ep.K, fx.targets, T0, fx.cfg);
  const PoseError e = pose_error(r.final_extrinsic, fx.ep.gt);
  EXPECT_LT(e.rot_deg, 1.0);
  EXPECT_LT(e.pos_m * 100.0, 1.0);
  EXPECT_TRUE(non_increasing(r.loss_history));
  EXPECT_LT(r.loss_history.back(), r.loss_history.front());
}

TEST(Refine, SafeguardKeepsLossMonotoneAndRunsAreDeterministic) {
  Fixture fx(4);
  fx.cfg.max_iters = 150;
  for (std::uint64_t s = 0; s < 3; ++s) {
    const Extrinsic T0 = retract(fx.ep.gt, offset(6.0, 3.0, 10 + s));
    for (Optimizer o : {Optimizer::kAdam, Optimizer::kGradientDescent}) {
      fx.cfg.optimizer = o;
      fx.cfg.learning_rate = o == Optimizer::kAdam ? 1e-4 : 1e-3;
      const RefineReport a = refine(fx.ep.model, fx.ep.joints, fx.ep.K, fx.targets, T0, fx.cfg);
      EXPECT_TRUE(non_increasing(a.loss_history)) << to_string(o) << " " << s;
      const RefineReport b = refine(fx.ep.model, fx.ep.joints, fx.ep.K, fx.targets, T0, fx.cfg);
      EXPECT_EQ(a.loss_history, b.loss_history);
      EXPECT_EQ(a.final_extrinsic, b.final_extrinsic);
    }
  }
}

TEST(Refine, FacingAwayReportsZeroGradient) {
  Fixture fx(5);
  const Vec3 eye = fx.ep.gt.inverse().translation();
  const Vec3 target(0, 0, 0.4);
  const Extrinsic away = look_at(eye, eye + (eye - target), Vec3(0, 0, 1));
  const RefineReport r = refine(fx.ep.model, fx.ep.joints, fx.ep.K, fx.targets, away, fx.cfg);
  EXPECT_TRUE(r.zero_gradient);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iters_run, 0);
  EXPECT_EQ(r.final_extrinsic, away);
  EXPECT_GE(r.empty_render_events, 13);
}

TEST(Refine, WrapperChecksTargets) {
  Fixture fx(6);
  std::vector<ImageF> three(fx.targets.begin(), fx.targets.begin() + 3);
  EXPECT_EQ(error_code_of([&] {
              refine(fx.ep.model, fx.ep.joints, fx.ep.K, three, fx.ep.gt, fx.cfg);
            }),
            ErrorCode::kShapeMismatch);
  RefineConfig bad = fx.cfg;
  bad.frames = {0, 99};
  EXPECT_EQ(error_code_of([&] {
              refine(fx.ep.model, fx.ep.joints, fx.ep.K, fx.targets, fx.ep.gt, bad);
            }),
            ErrorCode::kInvalidArgument);
}

TEST(RefineConfig, Validation) {
  RefineConfig c;
  EXPECT_NO_THROW(c.validate(10));
  c.learning_rate = 0.0;
  EXPECT_EQ(error_code_of([&] { c.validate(10); }), ErrorCode::kInvalidArgument);
  c = RefineConfig{};
  c.supersample = 3;
  EXPECT_EQ(error_code_of([&] { c.validate(10); }), ErrorCode::kInvalidArgument);
  c = RefineConfig{};
  c.weight_decay = -1.0;
  EXPECT_EQ(error_code_of([&] { c.validate(10); }), ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([&] { RefineConfig{}.validate(0); }), ErrorCode::kInvalidArgument);
}

TEST(RefineConfig, UniformFrames) {
  EXPECT_EQ(uniform_frames(20, 4), (std::vector<int>{0, 6, 13, 19}));
  EXPECT_EQ(uniform_frames(3, 4), (std::vector<int>{0, 1, 2}));
  EXPECT_EQ(uniform_frames(1, 4), (std::vector<int>{0}));
  EXPECT_TRUE(uniform_frames(0, 4).empty());
  RefineConfig c;
  EXPECT_EQ(c.resolved_frames(20).size(), static_cast<size_t>(kDefaultRefineFrames));
  c.frames = {5, 2};
  EXPECT_EQ(c.resolved_frames(20), (std::vector<int>{5, 2}));
}

TEST(Optimizer, Parsing) {
  EXPECT_EQ(optimizer_from_string("adam"), Optimizer::kAdam);
  EXPECT_EQ(optimizer_from_string("gd"), Optimizer::kGradientDescent);
  EXPECT_EQ(to_string(Optimizer::kGradientDescent), "gd");
  EXPECT_EQ(error_code_of([] { optimizer_from_string("sgd"); }), ErrorCode::kInvalidArgument);
}

TEST(RefineReport, Files) {
  test::TempDir dir;
  RefineReport r;
  r.loss_history = {0.5, 0.25, 0.125};
  r.iters_run = 2;
  r.converged = true;
  save_refine_report(dir.file("r.json"), r, Provenance{"t", "1", "abc", 7});
  const auto j = nlohmann::json::parse(test::read_file(dir.file("r.json")));
  EXPECT_EQ(j["iters_run"], 2);
  EXPECT_EQ(j["converged"], true);
  EXPECT_EQ(j["loss_history"].size(), 3u);
  EXPECT_EQ(j["provenance"]["seed"], 7);
  save_loss_curve_csv(dir.file("l.csv"), r);
  EXPECT_EQ(test::read_file(dir.file("l.csv")), "iter,loss\n0,0.5\n1,0.25\n2,0.125\n");
}

}  // namespace
}  // namespace calib
