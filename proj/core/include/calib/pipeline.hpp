#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "calib/metrics.hpp"
#include "calib/provenance.hpp"
#include "calib/refiner.hpp"
#include "calib/synth.hpp"
#include "calib/temporal_pnp.hpp"

namespace calib {

/// Process exit codes shared by every subcommand.
enum ExitCode : int {
  kExitOk = 0,
  kExitValidation = 2,
  kExitAwaitingInput = 3,
  kExitCollapse = 4,
};

struct PnpConfig {
  bool ransac = false;
  double ransac_threshold_px = kDefaultRansacThresholdPx;
  int ransac_iterations = kDefaultRansacIterations;
  int max_frames = kMaxPnpFrames;
};

struct PipelineConfig {
  RefineConfig refine;
  PnpConfig pnp;
  double auc_max_threshold = 0.10;
  int auc_bins = 100;
  std::uint64_t seed = 0;
};

/// Parses a TOML file with optional [refine], [pnp] and [metric] tables and a
/// top-level `seed`. Unknown keys are rejected. Throws kParseError.
PipelineConfig load_config(const std::string& path);
PipelineConfig parse_config(const std::string& toml_text, const std::string& origin = "config");

/// Stable text form of the effective configuration; hashed into provenance.
std::string canonical_config(const PipelineConfig& cfg);
Provenance provenance_for(const PipelineConfig& cfg);

/// Extrinsic JSON plus a "provenance" block.
void save_extrinsic(const std::string& path, const Extrinsic& T, const Provenance& prov);

struct CalibrateOptions {
  std::string episode_dir;
  std::string out_dir;  // defaults to episode_dir
  std::optional<std::string> init_path;  // skips the coarse stage
  /// Fill in a missing track or masks from gt_extrinsic.json.
  bool synth_complete = false;
  PipelineConfig config;
};

struct CalibrateResult {
  int exit_code = kExitOk;
  std::optional<Extrinsic> coarse;
  std::optional<Extrinsic> refined;
  RefineReport report;
};

/// Mark propagation, temporal PnP and refinement. Writes mark.json when
/// it stops for the tracker, otherwise coarse_extrinsic.json,
/// extrinsic.json (not on collapse), refine_report.json and loss_curve.csv.
CalibrateResult run_calibrate(const CalibrateOptions& opt, std::ostream& log);

/// Runs several episodes on `jobs` threads; returns the largest exit code.
/// Per-episode log output is kept together.
int run_calibrate_batch(const std::vector<CalibrateOptions>& episodes, int jobs,
                        std::ostream& log);

struct AnnotateOptions {
  std::string episode_dir;
  std::string extrinsic_path;
  std::string out_dir;  // defaults to <episode>/annotations
  int supersample = kDefaultSupersample;
  PipelineConfig config;
};

/// depth/%06d.pfm, link_id/%06d.png, mask/%06d.png, trajectory.json,
/// overlay_000000.png and provenance.json under out_dir.
int run_annotate(const AnnotateOptions& opt, std::ostream& log);

struct EvalOptions {
  std::string pred_path;
  std::string gt_path;
  std::string robot_path;
  std::string out_csv;  // optional
  PipelineConfig config;
};

struct EvalResult {
  int exit_code = kExitOk;
  double add_m = 0.0;
  double auc = 0.0;
  PoseError error;
};

EvalResult run_eval(const EvalOptions& opt, std::ostream& log);

struct GridOptions {
  std::optional<std::string> episode_dir;  // otherwise a synthetic arm
  SynthArm arm = SynthArm::kSpatial6Dof;
  int width = 320;
  int height = 240;
  double focal_px = 300.0;
  double camera_distance = 1.5;
  NoiseGridSpec spec;
  std::string out_csv;  // optional
  PipelineConfig config;
};

int run_grid(const GridOptions& opt, std::ostream& log,
             std::vector<GridCellResult>* cells = nullptr);

/// Episode scene used by the grid when no episode is given: the synthetic
/// arm's joint path reduced to the refinement frames.
GridScene synthetic_grid_scene(SynthArm arm, int width, int height, double focal_px,
                               double camera_distance, const RefineConfig& cfg,
                               std::uint64_t seed);

int run_synth(const SynthSpec& spec, const std::string& out_dir, std::ostream& log);

/// CALIB_SEED if set and valid, else `fallback`. Throws kParseError on a
/// malformed value.
std::uint64_t seed_from_env(std::uint64_t fallback);

}  // namespace calib
