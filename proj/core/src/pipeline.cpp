#include "calib/pipeline.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>
#include <toml.hpp>

#include "calib/episode.hpp"
#include "calib/error.hpp"
#include "calib/image_io.hpp"
#include "calib/renderer.hpp"

namespace calib {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

// ---- configuration -------------------------------------------------------

namespace {

template <class T>
T get(const toml::node& node, const std::string& where) {
  if constexpr (std::is_same_v<T, double>) {
    if (auto v = node.value<double>()) return *v;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (node.is_boolean()) return *node.value<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (node.is_string()) return *node.value<std::string>();
  } else {
    if (node.is_integer()) return static_cast<T>(*node.value<std::int64_t>());
  }
  throw Error(ErrorCode::kParseError, where + ": wrong value type");
}

void read_refine(const toml::table& t, const std::string& origin, RefineConfig& c) {
  for (auto&& [key, node] : t) {
    const std::string k(key.str());
    const std::string where = origin + ": refine." + k;
    if (k == "optimizer") c.optimizer = optimizer_from_string(get<std::string>(node, where));
    else if (k == "learning_rate") c.learning_rate = get<double>(node, where);
    else if (k == "weight_decay") c.weight_decay = get<double>(node, where);
    else if (k == "max_iters") c.max_iters = get<int>(node, where);
    else if (k == "fd_step_rot") c.fd_step_rot = get<double>(node, where);
    else if (k == "fd_step_trans") c.fd_step_trans = get<double>(node, where);
    else if (k == "supersample") c.supersample = get<int>(node, where);
    else if (k == "safeguard") c.safeguard = get<bool>(node, where);
    else if (k == "plateau_tol") c.plateau_tol = get<double>(node, where);
    else if (k == "plateau_iters") c.plateau_iters = get<int>(node, where);
    else if (k == "max_halvings") c.max_halvings = get<int>(node, where);
    else if (k == "frames") {
      const toml::array* arr = node.as_array();
      if (!arr) throw Error(ErrorCode::kParseError, where + ": expected an array");
      c.frames.clear();
      for (const auto& e : *arr) c.frames.push_back(get<int>(e, where));
    } else {
      throw Error(ErrorCode::kParseError, where + ": unknown key");
    }
  }
}

void read_pnp(const toml::table& t, const std::string& origin, PnpConfig& c) {
  for (auto&& [key, node] : t) {
    const std::string k(key.str());
    const std::string where = origin + ": pnp." + k;
    if (k == "ransac") c.ransac = get<bool>(node, where);
    else if (k == "ransac_threshold_px") c.ransac_threshold_px = get<double>(node, where);
    else if (k == "ransac_iterations") c.ransac_iterations = get<int>(node, where);
    else if (k == "max_frames") c.max_frames = get<int>(node, where);
    else throw Error(ErrorCode::kParseError, where + ": unknown key");
  }
}

}  // namespace

PipelineConfig parse_config(const std::string& text, const std::string& origin) {
  PipelineConfig cfg;
  toml::table root;
  try {
    root = toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << origin << ": " << e.description() << " at line " << e.source().begin.line;
    throw Error(ErrorCode::kParseError, os.str());
  }
  for (auto&& [key, node] : root) {
    const std::string k(key.str());
    const toml::table* sub = node.as_table();
    if (k == "seed") {
      const auto v = get<std::int64_t>(node, origin + ": seed");
      if (v < 0) throw Error(ErrorCode::kParseError, origin + ": seed must be >= 0");
      cfg.seed = static_cast<std::uint64_t>(v);
    } else if (k == "refine" && sub) {
      read_refine(*sub, origin, cfg.refine);
    } else if (k == "pnp" && sub) {
      read_pnp(*sub, origin, cfg.pnp);
    } else if (k == "metric" && sub) {
      for (auto&& [mk, mnode] : *sub) {
        const std::string m(mk.str());
        const std::string where = origin + ": metric." + m;
        if (m == "auc_max_threshold") cfg.auc_max_threshold = get<double>(mnode, where);
        else if (m == "auc_bins") cfg.auc_bins = get<int>(mnode, where);
        else throw Error(ErrorCode::kParseError, where + ": unknown key");
      }
    } else {
      throw Error(ErrorCode::kParseError, origin + ": unknown key or table '" + k + "'");
    }
  }
  if (!(cfg.auc_max_threshold > 0) || cfg.auc_bins < 1) {
    throw Error(ErrorCode::kParseError, origin + ": metric values must be positive");
  }
  if (cfg.pnp.max_frames < kMinCorrespondences || cfg.pnp.ransac_iterations < 1 ||
      !(cfg.pnp.ransac_threshold_px > 0)) {
    throw Error(ErrorCode::kParseError, origin + ": bad pnp values");
  }
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string canonical_config(const PipelineConfig& c) {
  ordered_json j;
  j["refine"] = {{"optimizer", to_string(c.refine.optimizer)},
                 {"learning_rate", c.refine.learning_rate},
                 {"weight_decay", c.refine.weight_decay},
                 {"max_iters", c.refine.max_iters},
                 {"fd_step_rot", c.refine.fd_step_rot},
                 {"fd_step_trans", c.refine.fd_step_trans},
                 {"frames", c.refine.frames},
                 {"supersample", c.refine.supersample},
                 {"safeguard", c.refine.safeguard},
                 {"plateau_tol", c.refine.plateau_tol},
                 {"plateau_iters", c.refine.plateau_iters},
                 {"max_halvings", c.refine.max_halvings}};
  j["pnp"] = {{"ransac", c.pnp.ransac},
              {"ransac_threshold_px", c.pnp.ransac_threshold_px},
              {"ransac_iterations", c.pnp.ransac_iterations},
              {"max_frames", c.pnp.max_frames}};
  j["metric"] = {{"auc_max_threshold", c.auc_max_threshold}, {"auc_bins", c.auc_bins}};
  j["seed"] = c.seed;
  return j.dump();
}

Provenance provenance_for(const PipelineConfig& cfg) {
  return make_provenance(canonical_config(cfg), cfg.seed);
}

std::uint64_t seed_from_env(std::uint64_t fallback) {
  const char* s = std::getenv("CALIB_SEED");
  if (!s || !*s) return fallback;
  try {
    size_t used = 0;
    const unsigned long long v = std::stoull(s, &used);
    if (used == std::string(s).size() && s[0] != '-') return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kParseError, std::string("CALIB_SEED is not a non-negative integer: ") + s);
}

// ---- shared helpers ------------------------------------------------------

namespace {

ordered_json provenance_json(const Provenance& p) {
  return {{"tool", p.tool}, {"version", p.version}, {"config_hash", p.config_hash}, {"seed", p.seed}};
}

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Loads an extrinsic and insists on the convention this tool writes.
Extrinsic load_checked_extrinsic(const std::string& path) {
  std::string convention;
  const Extrinsic T = load_extrinsic(path, &convention);
  if (convention != kExtrinsicConvention) {
    throw Error(ErrorCode::kConventionMismatch,
                path + ": convention '" + convention + "' differs from '" +
                    kExtrinsicConvention + "'");
  }
  return T;
}

int report_error(std::ostream& log, const Error& e) {
  log << "error: " << e.what() << '\n';
  return kExitValidation;
}

}  // namespace

void save_extrinsic(const std::string& path, const Extrinsic& T, const Provenance& prov) {
  ordered_json j = ordered_json::parse(extrinsic_to_json(T));
  j["provenance"] = provenance_json(prov);
  write_json(path, j);
}

// ---- calibrate -----------------------------------------------------------

CalibrateResult run_calibrate(const CalibrateOptions& opt, std::ostream& log) {
  CalibrateResult result;
  const PipelineConfig& cfg = opt.config;
  const Provenance prov = provenance_for(cfg);
  try {
    const Episode ep = load_episode(opt.episode_dir);
    const fs::path out_dir = opt.out_dir.empty() ? fs::path(opt.episode_dir) : fs::path(opt.out_dir);
    fs::create_directories(out_dir);
    const int n = ep.frame_count();
    cfg.refine.validate(n);

    if ((!ep.track || ep.mask_paths.empty()) && opt.synth_complete && !ep.gt_extrinsic) {
      throw Error(ErrorCode::kIoError,
                  ep.path(layout::kGtExtrinsic) + " missing; --synth-complete needs it");
    }

    // Coarse stage.
    Extrinsic coarse;
    if (opt.init_path) {
      coarse = load_checked_extrinsic(*opt.init_path);
      log << "coarse: using " << *opt.init_path << '\n';
    } else {
      Track2D track;
      if (ep.track) {
        track = *ep.track;
      } else if (opt.synth_complete) {
        std::vector<Vec3> eef;
        for (const auto& q : ep.joints) eef.push_back(eef_point(ep.robot, q));
        for (const auto& tp : project_trajectory(eef, *ep.gt_extrinsic, ep.K)) {
          track.points.push_back({tp.px.x(), tp.px.y(), tp.visible});
        }
        log << "track: synthesized from " << layout::kGtExtrinsic << '\n';
      } else {
        if (!ep.mark && !ep.has_features) {
          throw Error(ErrorCode::kIoError, ep.path(layout::kTrack) +
                                               " missing and no mark or feature maps to seed a tracker");
        }
        const fs::path mark_path = out_dir / layout::kMark;
        if (!ep.mark) {
          const FeatureMap ref = read_fmap(ep.path(layout::kReferenceFeatures));
          const Mark ref_mark = load_mark(ep.path(layout::kReferenceMark));
          const FeatureMap f0 = read_fmap(ep.path(layout::kFrame0Features));
          if (f0.width != ep.K.width || f0.height != ep.K.height) {
            throw Error(ErrorCode::kShapeMismatch,
                        ep.path(layout::kFrame0Features) + " size differs from intrinsics");
          }
          const Propagation p = propagate_mark(query_feature(ref, ref_mark), f0);
          save_mark(mark_path.string(), p.mark);
          log << "mark: propagated to (" << p.mark.u << ", " << p.mark.v << "), similarity "
              << p.similarity << '\n';
        }
        log << "awaiting track: run the point tracker from " << mark_path.string()
            << " and write " << ep.path(layout::kTrack) << '\n';
        result.exit_code = kExitAwaitingInput;
        return result;
      }
      Correspondences c = build_correspondences(track, ep.robot, ep.joints);
      c = subsample_uniform(c, cfg.pnp.max_frames);
      if (cfg.pnp.ransac) {
        const RansacResult r = solve_pnp_ransac(c, ep.K, cfg.pnp.ransac_threshold_px,
                                                cfg.pnp.ransac_iterations, cfg.seed);
        coarse = r.pose;
        log << "coarse: RANSAC kept " << r.inlier_count << " of " << c.size() << " pairs\n";
      } else {
        coarse = solve_pnp(c, ep.K);
        log << "coarse: PnP over " << c.size() << " pairs\n";
      }
    }
    result.coarse = coarse;
    save_extrinsic((out_dir / "coarse_extrinsic.json").string(), coarse, prov);

    // Fine stage.
    const std::vector<int> frames = cfg.refine.resolved_frames(n);
    std::vector<ImageF> targets;
    if (!ep.mask_paths.empty()) {
      for (int f : frames) targets.push_back(ep.load_mask(f));
    } else if (opt.synth_complete) {
      for (int f : frames) {
        const RenderBundle b = render(ep.robot, ep.joints[f], *ep.gt_extrinsic, ep.K);
        targets.push_back(mask_to_coverage(coverage_to_mask(b.coverage)));
      }
      log << "masks: synthesized from " << layout::kGtExtrinsic << '\n';
    } else {
      log << "awaiting masks: write " << ep.path(layout::kMasks) << "/%06d.png\n";
      result.exit_code = kExitAwaitingInput;
      return result;
    }
    for (size_t k = 0; k < targets.size(); ++k) {
      const auto& d = targets[k].data;
      if (std::all_of(d.begin(), d.end(), [](float v) { return v == 0.0f; })) {
        log << "warning: empty target mask for frame " << frames[k] << '\n';
      }
    }

    result.report = refine(ep.robot, ep.joints, ep.K, targets, coarse, cfg.refine);
    save_refine_report((out_dir / "refine_report.json").string(), result.report, prov);
    save_loss_curve_csv((out_dir / "loss_curve.csv").string(), result.report);
    log << "refine: " << result.report.iters_run << " iterations, loss "
        << result.report.loss_history.front() << " -> " << result.report.loss_history.back()
        << (result.report.converged ? " (converged)" : "") << '\n';
    if (result.report.zero_gradient) {
      log << "error: zero gradient region, the robot is not rendered near the initial pose\n";
      result.exit_code = kExitCollapse;
      return result;
    }
    result.refined = result.report.final_extrinsic;
    save_extrinsic((out_dir / "extrinsic.json").string(), *result.refined, prov);
    if (ep.gt_extrinsic) {
      const MetricConfig mc = default_metric_config(ep.robot);
      const PoseError e = pose_error(*result.refined, *ep.gt_extrinsic);
      log << "vs gt: ADD " << add_metric(*result.refined, *ep.gt_extrinsic, mc) << " m, rot "
          << e.rot_deg << " deg, pos " << e.pos_m * 100.0 << " cm\n";
    }
  } catch (const Error& e) {
    result.exit_code = report_error(log, e);
  }
  return result;
}

int run_calibrate_batch(const std::vector<CalibrateOptions>& episodes, int jobs,
                        std::ostream& log) {
  std::vector<std::string> logs(episodes.size());
  std::vector<int> codes(episodes.size(), kExitOk);
  std::mutex mu;
  size_t next = 0;
  auto worker = [&] {
    for (;;) {
      size_t i;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (next >= episodes.size()) return;
        i = next++;
      }
      std::ostringstream os;
      codes[i] = run_calibrate(episodes[i], os).exit_code;
      logs[i] = os.str();
    }
  };
  const int threads = std::max(1, std::min<int>(jobs, static_cast<int>(episodes.size())));
  std::vector<std::thread> pool;
  for (int k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  int worst = kExitOk;
  for (size_t i = 0; i < episodes.size(); ++i) {
    log << "== " << episodes[i].episode_dir << " (exit " << codes[i] << ")\n" << logs[i];
    worst = std::max(worst, codes[i]);
  }
  return worst;
}

// ---- annotate ------------------------------------------------------------

int run_annotate(const AnnotateOptions& opt, std::ostream& log) {
  try {
    const Episode ep = load_episode(opt.episode_dir);
    const Extrinsic T = load_checked_extrinsic(opt.extrinsic_path);
    const fs::path out = opt.out_dir.empty() ? fs::path(opt.episode_dir) / "annotations" : fs::path(opt.out_dir);
    fs::create_directories(out / "depth");
    fs::create_directories(out / "link_id");
    fs::create_directories(out / "mask");

    std::vector<Vec3> eef;
    for (int t = 0; t < ep.frame_count(); ++t) {
      const RenderBundle b = render(ep.robot, ep.joints[t], T, ep.K, opt.supersample);
      char name[32];
      std::snprintf(name, sizeof name, "%06d.pfm", t);
      write_pfm((out / "depth" / name).string(), b.depth);
      write_png_gray((out / "link_id" / frame_file_name(t)).string(), link_id_to_png(b.link_id));
      write_png_gray((out / "mask" / frame_file_name(t)).string(), coverage_to_mask(b.coverage));
      if (t == 0) {
        ImageRgb frame = read_png_rgb(ep.frame_paths[0]);
        if (frame.width != ep.K.width || frame.height != ep.K.height) {
          throw Error(ErrorCode::kShapeMismatch, ep.frame_paths[0] + " size differs from intrinsics");
        }
        const double tint[3] = {0.0, 255.0, 0.0};
        for (size_t i = 0; i < b.coverage.data.size(); ++i) {
          const double a = 0.5 * b.coverage.data[i];
          for (int ch = 0; ch < 3; ++ch) {
            std::uint8_t& px = frame.data[3 * i + ch];
            px = static_cast<std::uint8_t>(std::lround((1.0 - a) * px + a * tint[ch]));
          }
        }
        write_png_rgb((out / "overlay_000000.png").string(), frame);
      }
      eef.push_back(eef_point(ep.robot, ep.joints[t]));
    }
    ordered_json traj = ordered_json::array();
    const auto pts = project_trajectory(eef, T, ep.K);
    for (size_t t = 0; t < pts.size(); ++t) {
      ordered_json e;
      e["t"] = t;
      e["u"] = pts[t].px.x();
      e["v"] = pts[t].px.y();
      e["visible"] = pts[t].visible;
      traj.push_back(e);
    }
    {
      std::ofstream f(out / "trajectory.json");
      if (!f) throw Error(ErrorCode::kIoError, "cannot write " + (out / "trajectory.json").string());
      f << traj.dump(2) << '\n';
    }
    ordered_json meta;
    meta["extrinsic"] = opt.extrinsic_path;
    meta["supersample"] = opt.supersample;
    meta["frames"] = ep.frame_count();
    meta["depth_background"] = kPfmInfinity;
    meta["link_id_background"] = kLinkIdBackground;
    meta["provenance"] = provenance_json(provenance_for(opt.config));
    write_json(out / "provenance.json", meta);
    log << "annotate: " << ep.frame_count() << " frames written to " << out.string() << '\n';
    return kExitOk;
  } catch (const Error& e) {
    return report_error(log, e);
  }
}

// ---- eval ----------------------------------------------------------------

EvalResult run_eval(const EvalOptions& opt, std::ostream& log) {
  EvalResult r;
  try {
    const Extrinsic pred = load_checked_extrinsic(opt.pred_path);
    const Extrinsic gt = load_checked_extrinsic(opt.gt_path);
    const RobotModel robot = load_robot(opt.robot_path);
    MetricConfig mc = default_metric_config(robot);
    mc.auc_max_threshold = opt.config.auc_max_threshold;
    mc.auc_bins = opt.config.auc_bins;
    const auto dist = add_distances(pred, gt, mc.eval_points);
    r.add_m = add_metric(pred, gt, mc);
    r.auc = auc_metric(dist, mc);
    r.error = pose_error(pred, gt);
    log << "ADD " << r.add_m << " m\nAUC " << r.auc << "\nrot " << r.error.rot_deg
        << " deg\npos " << r.error.pos_m * 100.0 << " cm\n";
    if (!opt.out_csv.empty()) {
      std::ofstream out(opt.out_csv);
      if (!out) throw Error(ErrorCode::kIoError, "cannot write " + opt.out_csv);
      out << "add_m,auc,rot_err_deg,pos_err_cm\n" << std::setprecision(17) << r.add_m << ','
          << r.auc << ',' << r.error.rot_deg << ',' << r.error.pos_m * 100.0 << '\n';
      ordered_json j;
      j["add_m"] = r.add_m;
      j["auc"] = r.auc;
      j["rot_err_deg"] = r.error.rot_deg;
      j["pos_err_cm"] = r.error.pos_m * 100.0;
      j["provenance"] = provenance_json(provenance_for(opt.config));
      write_json(fs::path(opt.out_csv).replace_extension(".json"), j);
    }
  } catch (const Error& e) {
    r.exit_code = report_error(log, e);
  }
  return r;
}

// ---- grid ----------------------------------------------------------------

GridScene synthetic_grid_scene(SynthArm arm, int width, int height, double focal_px,
                               double camera_distance, const RefineConfig& cfg,
                               std::uint64_t seed) {
  GridScene scene;
  scene.model = make_arm(arm);
  scene.K = make_intrinsics(width, height, focal_px);
  scene.camera_distance = camera_distance;
  SynthSpec spec;
  Rng rng = make_rng({seed, 1});
  const auto path = make_joint_path(scene.model, arm, spec.n_frames, rng);
  cfg.validate(spec.n_frames);
  for (int f : cfg.resolved_frames(spec.n_frames)) scene.frames.push_back(path[f]);
  return scene;
}

int run_grid(const GridOptions& opt, std::ostream& log, std::vector<GridCellResult>* cells_out) {
  try {
    GridScene scene;
    RefineConfig rcfg = opt.config.refine;
    if (opt.episode_dir) {
      const Episode ep = load_episode(*opt.episode_dir);
      rcfg.validate(ep.frame_count());
      scene.model = ep.robot;
      scene.K = ep.K;
      scene.camera_distance = opt.camera_distance;
      for (int f : rcfg.resolved_frames(ep.frame_count())) scene.frames.push_back(ep.joints[f]);
    } else {
      scene = synthetic_grid_scene(opt.arm, opt.width, opt.height, opt.focal_px,
                                   opt.camera_distance, rcfg, opt.spec.seed);
    }
    rcfg.frames.clear();
    const auto cells = convergence_grid(scene, opt.spec, rcfg);
    log << grid_table(cells);
    if (!opt.out_csv.empty()) {
      save_grid_csv(opt.out_csv, cells);
      ordered_json j;
      j["n_poses"] = opt.spec.n_poses;
      j["m_samples"] = opt.spec.m_samples;
      j["seed"] = opt.spec.seed;
      j["diagonal"] = opt.spec.diagonal;
      j["cells"] = nlohmann::json::array();
      for (const auto& c : cells) {
        j["cells"].push_back(ordered_json{{"rot", {c.rot.lo, c.rot.hi}},
                                          {"pos", {c.pos.lo, c.pos.hi}},
                                          {"mean_rot", c.mean_rot_err},
                                          {"std_rot", c.std_rot_err},
                                          {"mean_pos", c.mean_pos_err},
                                          {"std_pos", c.std_pos_err},
                                          {"verdict", to_string(c.verdict)},
                                          {"failed_samples", c.failed_samples}});
      }
      j["provenance"] = provenance_json(provenance_for(opt.config));
      write_json(fs::path(opt.out_csv).replace_extension(".json"), j);
    }
    if (cells_out) *cells_out = cells;
    return kExitOk;
  } catch (const Error& e) {
    return report_error(log, e);
  }
}

// ---- synth ---------------------------------------------------------------

int run_synth(const SynthSpec& spec, const std::string& out_dir, std::ostream& log) {
  try {
    const SynthEpisode ep = generate_episode(spec, out_dir);
    ordered_json meta;
    meta["arm"] = to_string(spec.arm);
    meta["n_frames"] = spec.n_frames;
    meta["camera_distance"] = spec.camera_distance;
    meta["track_noise_px"] = spec.track_noise_px;
    meta["mark_offset"] = {spec.mark_offset.x(), spec.mark_offset.y(), spec.mark_offset.z()};
    meta["mask_noise"] = spec.mask_noise.to_string();
    meta["mask_supersample"] = spec.supersample;
    meta["provenance"] = provenance_json(make_provenance(meta.dump(), spec.seed));
    write_json(fs::path(out_dir) / "synth.json", meta);
    log << "synth: " << spec.n_frames << " frames of " << to_string(spec.arm) << " written to "
        << out_dir << '\n';
    return kExitOk;
  } catch (const Error& e) {
    return report_error(log, e);
  }
}

}  // namespace calib
