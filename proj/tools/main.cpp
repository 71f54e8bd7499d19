// calib: coarse-to-fine eye-to-hand calibration from episode directories.

#include <CLI11.hpp>
#include <iostream>
#include <sstream>

#include "calib/error.hpp"
#include "calib/pipeline.hpp"

namespace {

using calib::NoiseRange;

// "1:5,20:25" -> {{1,5},{20,25}}
std::vector<NoiseRange> parse_ranges(const std::string& text) {
  std::vector<NoiseRange> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw calib::Error(calib::ErrorCode::kInvalidArgument, "range '" + item + "' is not lo:hi");
    }
    try {
      out.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::exception&) {
      throw calib::Error(calib::ErrorCode::kInvalidArgument, "range '" + item + "' is not numeric");
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Eye-to-hand camera calibration: temporal PnP followed by silhouette refinement"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", calib::library_version());

  std::string config_path;
  long long seed = -1;
  app.add_option("--config", config_path, "TOML file overriding [refine], [pnp], [metric]")
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Global seed (overrides CALIB_SEED and the config)");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Estimate extrinsic.json for one or more episodes");
  std::vector<std::string> cal_dirs;
  std::string cal_out, cal_init;
  bool synth_complete = false;
  int jobs = 1;
  cal->add_option("episodes", cal_dirs, "Episode directories")->required();
  cal->add_option("--out", cal_out, "Output directory (single episode only; default: the episode)");
  cal->add_option("--init", cal_init, "Initial extrinsic; skips the coarse stage")->check(CLI::ExistingFile);
  cal->add_flag("--synth-complete", synth_complete,
                "Synthesize a missing track or masks from gt_extrinsic.json");
  cal->add_option("--jobs,-j", jobs, "Episodes processed concurrently")->check(CLI::PositiveNumber);

  // annotate
  auto* ann = app.add_subcommand("annotate", "Export depth, link-ID, masks and the EEF trajectory");
  std::string ann_dir, ann_extr, ann_out;
  int ann_ss = calib::kDefaultSupersample;
  ann->add_option("episode", ann_dir, "Episode directory")->required();
  ann->add_option("extrinsic", ann_extr, "extrinsic.json")->required();
  ann->add_option("--out", ann_out, "Output directory (default: <episode>/annotations)");
  ann->add_option("--supersample", ann_ss, "1, 2 or 4")->check(CLI::IsMember({1, 2, 4}));

  // eval
  auto* ev = app.add_subcommand("eval", "ADD, AUC and pose errors of a prediction");
  std::string ev_pred, ev_gt, ev_robot, ev_out;
  ev->add_option("pred", ev_pred, "Predicted extrinsic.json")->required();
  ev->add_option("gt", ev_gt, "Ground-truth extrinsic.json")->required();
  ev->add_option("robot", ev_robot, "robot.json")->required();
  ev->add_option("--out", ev_out, "CSV output");

  // grid
  auto* gr = app.add_subcommand("grid", "Convergence grid over injected pose noise");
  calib::GridOptions gopt;
  std::string grid_episode, arm = "spatial_6dof";
  std::string rot_ranges = "0:0,1:5,5:10,10:15,15:20,20:25";
  std::string pos_ranges = "0:0,0.1:2.5,2.5:5,5:10,10:15";
  gr->add_option("--episode", grid_episode, "Use this episode's robot, joints and intrinsics");
  gr->add_option("--arm", arm, "Synthetic arm when no episode is given")
      ->check(CLI::IsMember({"single_link", "planar_3dof", "spatial_6dof"}));
  gr->add_option("--rot-ranges", rot_ranges, "Rotation noise ranges in degrees, lo:hi,...");
  gr->add_option("--pos-ranges", pos_ranges, "Position noise ranges in cm, lo:hi,...");
  gr->add_flag("--diagonal", gopt.spec.diagonal, "Pair the k-th rotation and position ranges");
  gr->add_option("-n", gopt.spec.n_poses, "Ground-truth cameras per cell")->check(CLI::PositiveNumber);
  gr->add_option("-m", gopt.spec.m_samples, "Noise draws per camera")->check(CLI::PositiveNumber);
  gr->add_option("--width", gopt.width);
  gr->add_option("--height", gopt.height);
  gr->add_option("--focal", gopt.focal_px, "Focal length in pixels");
  gr->add_option("--distance", gopt.camera_distance, "Camera distance in m");
  gr->add_option("--out", gopt.out_csv, "CSV output");

  // synth
  auto* sy = app.add_subcommand("synth", "Write a synthetic episode with known ground truth");
  calib::SynthSpec spec;
  std::string sy_out, sy_arm = "spatial_6dof", mask_noise = "none";
  std::vector<double> mark_offset;
  sy->add_option("out", sy_out, "Episode directory to create")->required();
  sy->add_option("--arm", sy_arm)->check(CLI::IsMember({"single_link", "planar_3dof", "spatial_6dof"}));
  sy->add_option("--frames", spec.n_frames);
  sy->add_option("--distance", spec.camera_distance, "Camera distance in m");
  sy->add_option("--track-noise", spec.track_noise_px, "Gaussian track noise in px");
  sy->add_option("--mark-offset", mark_offset, "Mark offset in the tool frame, m")->expected(3);
  sy->add_option("--mask-noise", mask_noise, "none, dilate_K, erode_K or speckle_P");
  sy->add_option("--width", spec.width);
  sy->add_option("--height", spec.height);
  sy->add_option("--focal", spec.focal_px, "Focal length in pixels");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? calib::kExitOk : calib::kExitValidation;
  }

  try {
    calib::PipelineConfig cfg;
    if (!config_path.empty()) cfg = calib::load_config(config_path);
    cfg.seed = seed >= 0 ? static_cast<std::uint64_t>(seed) : calib::seed_from_env(cfg.seed);

    if (*cal) {
      if (!cal_out.empty() && cal_dirs.size() > 1) {
        std::cerr << "error: --out needs a single episode\n";
        return calib::kExitValidation;
      }
      std::vector<calib::CalibrateOptions> runs;
      for (const auto& d : cal_dirs) {
        calib::CalibrateOptions o;
        o.episode_dir = d;
        o.out_dir = cal_out;
        if (!cal_init.empty()) o.init_path = cal_init;
        o.synth_complete = synth_complete;
        o.config = cfg;
        runs.push_back(o);
      }
      if (runs.size() == 1) return calib::run_calibrate(runs[0], std::cout).exit_code;
      return calib::run_calibrate_batch(runs, jobs, std::cout);
    }
    if (*ann) {
      calib::AnnotateOptions o{ann_dir, ann_extr, ann_out, ann_ss, cfg};
      return calib::run_annotate(o, std::cout);
    }
    if (*ev) {
      calib::EvalOptions o{ev_pred, ev_gt, ev_robot, ev_out, cfg};
      return calib::run_eval(o, std::cout).exit_code;
    }
    if (*gr) {
      if (!grid_episode.empty()) gopt.episode_dir = grid_episode;
      gopt.arm = calib::synth_arm_from_string(arm);
      gopt.spec.rot_ranges = parse_ranges(rot_ranges);
      gopt.spec.pos_ranges = parse_ranges(pos_ranges);
      gopt.spec.seed = cfg.seed;
      gopt.config = cfg;
      return calib::run_grid(gopt, std::cout);
    }
    if (*sy) {
      spec.arm = calib::synth_arm_from_string(sy_arm);
      spec.mask_noise = calib::MaskNoise::parse(mask_noise);
      spec.seed = cfg.seed;
      if (!mark_offset.empty()) spec.mark_offset = calib::Vec3(mark_offset[0], mark_offset[1], mark_offset[2]);
      return calib::run_synth(spec, sy_out, std::cout);
    }
  } catch (const calib::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return calib::kExitValidation;
  }
  return calib::kExitValidation;
}
