#include "calib/pipeline.hpp"

#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "calib/episode.hpp"
#include "calib/image_io.hpp"
#include "calib/renderer.hpp"
#include "test_util.hpp"

namespace calib {
namespace {

namespace fs = std::filesystem;
using test::error_code_of;

// Runs the CLI; returns its exit code and leaves combined output in `out`.
int run_cli(const std::string& args, std::string* out = nullptr) {
  test::TempDir tmp;
  const std::string log = tmp.file("log.txt");
  const std::string cmd = std::string(CALIB_CLI_PATH) + " " + args + " > " + log + " 2>&1";
  const int status = std::system(cmd.c_str());
  if (out) *out = test::read_file(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

PipelineConfig fast_config() {
  PipelineConfig c;
  c.refine.supersample = 2;
  c.refine.max_iters = 400;
  return c;
}

SynthSpec fast_spec(std::uint64_t seed) {
  SynthSpec s;
  s.n_frames = 20;
  s.seed = seed;
  s.supersample = 2;
  s.mark_offset = Vec3::Zero();
  return s;
}

TEST(Config, ParsesAllTables) {
  const PipelineConfig c = parse_config(R"(
seed = 17
[refine]
optimizer = "gd"
learning_rate = 0.001
max_iters = 50
frames = [0, 3]
supersample = 2
safeguard = false
[pnp]
ransac = true
ransac_threshold_px = 4.0
[metric]
auc_bins = 50
)");
  EXPECT_EQ(c.seed, 17u);
  EXPECT_EQ(c.refine.optimizer, Optimizer::kGradientDescent);
  EXPECT_EQ(c.refine.learning_rate, 0.001);
  EXPECT_EQ(c.refine.max_iters, 50);
  EXPECT_EQ(c.refine.frames, (std::vector<int>{0, 3}));
  EXPECT_FALSE(c.refine.safeguard);
  EXPECT_TRUE(c.pnp.ransac);
  EXPECT_EQ(c.pnp.ransac_threshold_px, 4.0);
  EXPECT_EQ(c.auc_bins, 50);
}

TEST(Config, Rejections) {
  for (const char* bad : {"[refine]\nlr = 1\n", "[refine]\nmax_iters = \"x\"\n", "bogus = 1\n",
                          "seed = -1\n", "[metric]\nauc_bins = 0\n", "[refine\n",
                          "[refine]\noptimizer = 3\n"}) {
    EXPECT_EQ(error_code_of([&] { parse_config(bad); }), ErrorCode::kParseError) << bad;
  }
  EXPECT_EQ(error_code_of([] { parse_config("[refine]\noptimizer = \"lbfgs\"\n"); }),
            ErrorCode::kInvalidArgument);
  EXPECT_EQ(error_code_of([] { load_config("/nonexistent.toml"); }), ErrorCode::kIoError);
}

TEST(Config, CanonicalFormFeedsProvenance) {
  PipelineConfig a, b;
  EXPECT_EQ(canonical_config(a), canonical_config(b));
  EXPECT_EQ(provenance_for(a).config_hash, provenance_for(b).config_hash);
  b.refine.learning_rate = 2e-4;
  EXPECT_NE(provenance_for(a).config_hash, provenance_for(b).config_hash);
  EXPECT_EQ(provenance_for(a).config_hash.size(), 16u);
}

TEST(Config, SeedFromEnvironment) {
  ::unsetenv("CALIB_SEED");
  EXPECT_EQ(seed_from_env(5), 5u);
  ::setenv("CALIB_SEED", "123", 1);
  EXPECT_EQ(seed_from_env(5), 123u);
  ::setenv("CALIB_SEED", "12x", 1);
  EXPECT_EQ(error_code_of([] { seed_from_env(5); }), ErrorCode::kParseError);
  ::setenv("CALIB_SEED", "-3", 1);
  EXPECT_EQ(error_code_of([] { seed_from_env(5); }), ErrorCode::kParseError);
  ::unsetenv("CALIB_SEED");
}

TEST(Calibrate, ZeroNoiseEpisodeRecoversGroundTruth) {
  test::TempDir dir;
  const SynthEpisode ep = generate_episode(fast_spec(1), dir.str());
  std::ostringstream log;
  const CalibrateResult r = run_calibrate({dir.str(), "", std::nullopt, false, fast_config()}, log);
  ASSERT_EQ(r.exit_code, kExitOk) << log.str();
  ASSERT_TRUE(r.refined.has_value());
  MetricConfig mc = default_metric_config(ep.model);
  EXPECT_LT(add_metric(*r.refined, ep.gt, mc), 1e-3);
  EXPECT_LT(add_metric(*r.coarse, ep.gt, mc), 1e-3);
  for (const char* f : {"coarse_extrinsic.json", "extrinsic.json", "refine_report.json",
                        "loss_curve.csv"}) {
    EXPECT_TRUE(fs::exists(dir.file(f))) << f;
  }
  const auto j = nlohmann::json::parse(test::read_file(dir.file("extrinsic.json")));
  EXPECT_EQ(j["provenance"]["config_hash"], provenance_for(fast_config()).config_hash);
  EXPECT_EQ(load_extrinsic(dir.file("extrinsic.json")), *r.refined);
}

TEST(Calibrate, RerunIsByteIdentical) {
  test::TempDir dir, out1, out2;
  generate_episode(fast_spec(2), dir.str());
  std::ostringstream log;
  ASSERT_EQ(run_calibrate({dir.str(), out1.str(), std::nullopt, false, fast_config()}, log).exit_code,
            kExitOk);
  ASSERT_EQ(run_calibrate({dir.str(), out2.str(), std::nullopt, false, fast_config()}, log).exit_code,
            kExitOk);
  for (const char* f : {"extrinsic.json", "refine_report.json", "loss_curve.csv"}) {
    EXPECT_EQ(test::read_file(out1.file(f)), test::read_file(out2.file(f))) << f;
  }
}

TEST(Calibrate, WithoutTrackWritesMarkAndWaits) {
  test::TempDir dir;
  const SynthEpisode ep = generate_episode(fast_spec(3), dir.str());
  fs::remove(dir.file(layout::kTrack));
  std::ostringstream log;
  const CalibrateResult r = run_calibrate({dir.str(), "", std::nullopt, false, fast_config()}, log);
  EXPECT_EQ(r.exit_code, kExitAwaitingInput);
  ASSERT_TRUE(fs::exists(dir.file(layout::kMark)));
  const Mark m = load_mark(dir.file(layout::kMark));
  EXPECT_EQ(m.source, MarkSource::kPropagated);
  EXPECT_FALSE(fs::exists(dir.file("extrinsic.json")));
  EXPECT_NE(log.str().find("awaiting track"), std::string::npos);
}

TEST(Calibrate, WithoutMasksWaits) {
  test::TempDir dir;
  generate_episode(fast_spec(4), dir.str());
  fs::remove_all(dir.file(layout::kMasks));
  std::ostringstream log;
  const CalibrateResult r = run_calibrate({dir.str(), "", std::nullopt, false, fast_config()}, log);
  EXPECT_EQ(r.exit_code, kExitAwaitingInput);
  EXPECT_TRUE(fs::exists(dir.file("coarse_extrinsic.json")));
  EXPECT_FALSE(fs::exists(dir.file("extrinsic.json")));
}

TEST(Calibrate, SynthCompleteFillsMissingParts) {
  test::TempDir dir;
  const SynthEpisode ep = generate_episode(fast_spec(5), dir.str());
  fs::remove(dir.file(layout::kTrack));
  fs::remove_all(dir.file(layout::kMasks));
  std::ostringstream log;
  const CalibrateResult r = run_calibrate({dir.str(), "", std::nullopt, true, fast_config()}, log);
  ASSERT_EQ(r.exit_code, kExitOk) << log.str();
  EXPECT_LT(pose_error(*r.refined, ep.gt).rot_deg, 0.1);
}

TEST(Calibrate, FacingAwayInitCollapses) {
  test::TempDir dir, init;
  const SynthEpisode ep = generate_episode(fast_spec(6), dir.str());
  const Vec3 eye = ep.gt.inverse().translation();
  const Extrinsic away = look_at(eye, 2.0 * eye, Vec3(0, 0, 1));
  save_extrinsic(init.file("away.json"), away);
  std::ostringstream log;
  const CalibrateResult r =
      run_calibrate({dir.str(), "", init.file("away.json"), false, fast_config()}, log);
  EXPECT_EQ(r.exit_code, kExitCollapse);
  EXPECT_TRUE(r.report.zero_gradient);
  EXPECT_FALSE(fs::exists(dir.file("extrinsic.json")));
  EXPECT_TRUE(fs::exists(dir.file("refine_report.json")));
}

TEST(Calibrate, MissingJointsIsValidationError) {
  test::TempDir dir;
  generate_episode(fast_spec(7), dir.str());
  fs::remove(dir.file(layout::kJoints));
  std::ostringstream log;
  EXPECT_EQ(run_calibrate({dir.str(), "", std::nullopt, false, fast_config()}, log).exit_code,
            kExitValidation);
  EXPECT_NE(log.str().find("joints.csv"), std::string::npos) << log.str();
}

TEST(Calibrate, BatchReturnsWorstCode) {
  test::TempDir good, bad;
  generate_episode(fast_spec(8), good.str());
  generate_episode(fast_spec(9), bad.str());
  fs::remove(bad.file(layout::kTrack));
  std::ostringstream log;
  const int code = run_calibrate_batch({{good.str(), "", std::nullopt, false, fast_config()},
                                        {bad.str(), "", std::nullopt, false, fast_config()}},
                                       2, log);
  EXPECT_EQ(code, kExitAwaitingInput);
  EXPECT_NE(log.str().find("(exit 0)"), std::string::npos);
  EXPECT_NE(log.str().find("(exit 3)"), std::string::npos);
}

TEST(Annotate, ExportsMatchRenderer) {
  test::TempDir dir;
  const SynthEpisode ep = generate_episode(fast_spec(10), dir.str());
  std::ostringstream log;
  ASSERT_EQ(run_annotate({dir.str(), dir.file(layout::kGtExtrinsic), "", 2, {}}, log), kExitOk)
      << log.str();
  const fs::path out = fs::path(dir.str()) / "annotations";
  for (int t : {0, 7, 19}) {
    const RenderBundle b = render(ep.model, ep.joints[t], ep.gt, ep.K, 2);
    char name[32];
    std::snprintf(name, sizeof name, "%06d.pfm", t);
    EXPECT_EQ(read_pfm((out / "depth" / name).string()), b.depth);
    EXPECT_EQ(read_png_gray((out / "link_id" / frame_file_name(t)).string()),
              link_id_to_png(b.link_id));
    EXPECT_EQ(read_png_gray((out / "mask" / frame_file_name(t)).string()),
              coverage_to_mask(b.coverage));
  }
  const auto traj = nlohmann::json::parse(test::read_file((out / "trajectory.json").string()));
  ASSERT_EQ(traj.size(), 20u);
  EXPECT_EQ(traj[5]["u"].get<double>(), ep.track.points[5].u);
  EXPECT_EQ(traj[5]["v"].get<double>(), ep.track.points[5].v);
  EXPECT_TRUE(fs::exists(out / "overlay_000000.png"));
  EXPECT_TRUE(fs::exists(out / "provenance.json"));
}

TEST(Annotate, RejectsForeignConvention) {
  test::TempDir dir;
  generate_episode(fast_spec(11), dir.str());
  test::write_file(dir.file("other.json"),
                   R"({"convention": "base_from_camera", "matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,0],[0,0,0,1]]})");
  std::ostringstream log;
  EXPECT_EQ(run_annotate({dir.str(), dir.file("other.json"), "", 2, {}}, log), kExitValidation);
}

class EvalFiles : public ::testing::Test {
 protected:
  void SetUp() override {
    const RobotModel arm = make_arm(SynthArm::kSpatial6Dof);
    save_robot(dir_.file("robot.json"), arm);
    gt_ = look_at(Vec3(1.5, 0.2, 0.8), Vec3(0, 0, 0.4), Vec3(0, 0, 1));
    save_extrinsic(dir_.file("gt.json"), gt_);
  }
  test::TempDir dir_;
  Extrinsic gt_;
};

TEST_F(EvalFiles, PerfectPrediction) {
  std::ostringstream log;
  const EvalResult r =
      run_eval({dir_.file("gt.json"), dir_.file("gt.json"), dir_.file("robot.json"), "", {}}, log);
  EXPECT_EQ(r.exit_code, kExitOk);
  EXPECT_EQ(r.add_m, 0.0);
  EXPECT_DOUBLE_EQ(r.auc, 0.99);
}

TEST_F(EvalFiles, CentimeterShift) {
  save_extrinsic(dir_.file("pred.json"),
                 Extrinsic(gt_.rotation(), gt_.translation() + Vec3(0, 0.01, 0)));
  std::ostringstream log;
  const EvalResult r = run_eval(
      {dir_.file("pred.json"), dir_.file("gt.json"), dir_.file("robot.json"), dir_.file("e.csv"), {}},
      log);
  EXPECT_EQ(r.exit_code, kExitOk);
  EXPECT_NEAR(r.add_m, 0.01, 1e-12);
  EXPECT_NEAR(r.error.pos_m, 0.01, 1e-12);
  EXPECT_TRUE(fs::exists(dir_.file("e.csv")));
  EXPECT_TRUE(fs::exists(dir_.file("e.json")));
}

TEST_F(EvalFiles, MalformedJson) {
  test::write_file(dir_.file("bad.json"), "{\"matrix\": [1, 2");
  std::ostringstream log;
  EXPECT_EQ(run_eval({dir_.file("bad.json"), dir_.file("gt.json"), dir_.file("robot.json"), "", {}},
                     log)
                .exit_code,
            kExitValidation);
}

TEST(Grid, ZeroNoiseIsConvergedAndRerunsIdentically) {
  test::TempDir dir;
  GridOptions o;
  o.width = 160;
  o.height = 120;
  o.focal_px = 150.0;
  o.spec.rot_ranges = {{0, 0}};
  o.spec.pos_ranges = {{0, 0}};
  o.spec.n_poses = 1;
  o.spec.m_samples = 2;
  o.config.refine.supersample = 2;
  o.config.refine.max_iters = 300;
  o.out_csv = dir.file("a.csv");
  std::ostringstream log;
  std::vector<GridCellResult> cells;
  ASSERT_EQ(run_grid(o, log, &cells), kExitOk) << log.str();
  ASSERT_EQ(cells.size(), 1u);
  EXPECT_EQ(cells[0].verdict, Verdict::kConverged);
  o.out_csv = dir.file("b.csv");
  ASSERT_EQ(run_grid(o, log), kExitOk);
  EXPECT_EQ(test::read_file(dir.file("a.csv")), test::read_file(dir.file("b.csv")));
  EXPECT_EQ(test::read_file(dir.file("a.json")), test::read_file(dir.file("b.json")));
}

TEST(Cli, ExitCodes) {
  test::TempDir dir;
  std::string out;
  ASSERT_EQ(run_cli("synth " + dir.file("ep") + " --frames 12 --seed 3", &out), 0) << out;
  EXPECT_TRUE(fs::exists(dir.file("ep/synth.json")));
  fs::remove(dir.file("ep/track.csv"));
  EXPECT_EQ(run_cli("calibrate " + dir.file("ep"), &out), 3) << out;
  EXPECT_TRUE(fs::exists(dir.file("ep/mark.json")));
  fs::remove(dir.file("ep/joints.csv"));
  EXPECT_EQ(run_cli("calibrate " + dir.file("ep"), &out), 2);
  EXPECT_NE(out.find("joints.csv"), std::string::npos) << out;
  EXPECT_EQ(run_cli("synth " + dir.file("x") + " --frames 5", &out), 2);
  EXPECT_NE(run_cli("nonsense", &out), 0);
  test::write_file(dir.file("c.toml"), "[refine]\nbogus = 1\n");
  EXPECT_EQ(run_cli("--config " + dir.file("c.toml") + " synth " + dir.file("y"), &out), 2);
  EXPECT_NE(out.find("bogus"), std::string::npos);
}

TEST(Cli, CollapseExitCode) {
  test::TempDir dir;
  std::string out;
  ASSERT_EQ(run_cli("synth " + dir.file("ep") + " --frames 12 --seed 4", &out), 0) << out;
  const Extrinsic gt = load_extrinsic(dir.file("ep/gt_extrinsic.json"));
  const Vec3 eye = gt.inverse().translation();
  save_extrinsic(dir.file("away.json"), look_at(eye, 2.0 * eye, Vec3(0, 0, 1)));
  EXPECT_EQ(run_cli("calibrate " + dir.file("ep") + " --init " + dir.file("away.json"), &out), 4)
      << out;
}

TEST(Cli, EnvironmentSeedReachesSynth) {
  test::TempDir dir;
  std::string out;
  ::setenv("CALIB_SEED", "9", 1);
  ASSERT_EQ(run_cli("synth " + dir.file("a") + " --frames 10", &out), 0) << out;
  ::unsetenv("CALIB_SEED");
  ASSERT_EQ(run_cli("synth " + dir.file("b") + " --frames 10 --seed 9", &out), 0) << out;
  EXPECT_EQ(test::read_file(dir.file("a/gt_extrinsic.json")),
            test::read_file(dir.file("b/gt_extrinsic.json")));
  EXPECT_EQ(test::read_file(dir.file("a/synth.json")), test::read_file(dir.file("b/synth.json")));
}

}  // namespace
}  // namespace calib
