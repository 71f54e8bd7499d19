#include "calib/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "calib/error.hpp"
#include "calib/renderer.hpp"
#include "calib/synth.hpp"

namespace calib {

void MetricConfig::validate() const {
  if (eval_points.empty()) throw Error(ErrorCode::kInvalidArgument, "no eval points");
  if (!(auc_max_threshold > 0) || auc_bins < 1) {
    throw Error(ErrorCode::kInvalidArgument, "AUC threshold and bins must be positive");
  }
}

std::vector<Vec3> default_eval_points(const RobotModel& model, int max_points) {
  JointState zero;
  zero.q.assign(model.actuated_count(), 0.0);
  std::vector<Vec3> all;
  for (const auto& mesh : posed_meshes(model, zero)) {
    all.insert(all.end(), mesh.vertices.begin(), mesh.vertices.end());
  }
  if (static_cast<int>(all.size()) <= max_points) return all;
  const size_t stride = (all.size() + max_points - 1) / max_points;
  std::vector<Vec3> out;
  for (size_t i = 0; i < all.size(); i += stride) out.push_back(all[i]);
  return out;
}

MetricConfig default_metric_config(const RobotModel& model) {
  MetricConfig cfg;
  cfg.eval_points = default_eval_points(model);
  return cfg;
}

std::vector<double> add_distances(const Extrinsic& pred, const Extrinsic& gt,
                                  const std::vector<Vec3>& points) {
  std::vector<double> d;
  d.reserve(points.size());
  for (const Vec3& p : points) d.push_back((transform_point(pred, p) - transform_point(gt, p)).norm());
  return d;
}

double add_metric(const Extrinsic& pred, const Extrinsic& gt, const MetricConfig& cfg) {
  cfg.validate();
  double sum = 0.0;
  for (double d : add_distances(pred, gt, cfg.eval_points)) sum += d;
  return sum / static_cast<double>(cfg.eval_points.size());
}

double auc_metric(const std::vector<double>& distances, const MetricConfig& cfg) {
  if (!(cfg.auc_max_threshold > 0) || cfg.auc_bins < 1) {
    throw Error(ErrorCode::kInvalidArgument, "AUC threshold and bins must be positive");
  }
  if (distances.empty()) throw Error(ErrorCode::kInvalidArgument, "no distances");
  // A distance d passes bin i iff i * step > d, i.e. it passes the bins
  // from its first passing index up to T-1.
  const double step = cfg.auc_max_threshold / cfg.auc_bins;
  std::vector<long> first_pass_count(cfg.auc_bins + 1, 0);
  for (double d : distances) {
    if (!(d >= 0)) throw Error(ErrorCode::kInvalidArgument, "negative or NaN distance");
    const double idx = std::floor(d / step);
    int k = idx >= cfg.auc_bins ? cfg.auc_bins : static_cast<int>(idx);
    // floor() is only a starting guess; settle on the exact comparison.
    while (k < cfg.auc_bins && !(k * step > d)) ++k;
    while (k > 0 && (k - 1) * step > d) --k;
    ++first_pass_count[k];
  }
  double total = 0.0;
  long passing = 0;
  for (int i = 0; i < cfg.auc_bins; ++i) {
    passing += first_pass_count[i];
    total += static_cast<double>(passing) / static_cast<double>(distances.size());
  }
  return total / cfg.auc_bins;
}

PoseError pose_error(const Extrinsic& pred, const Extrinsic& gt) {
  return {rotation_geodesic_deg(pred.rotation(), gt.rotation()),
          translation_dist_m(pred.translation(), gt.translation())};
}

namespace {

Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  for (;;) {
    const Vec3 v(n(rng), n(rng), n(rng));
    const double len = v.norm();
    if (len > 1e-12) return v / len;
  }
}

void check_range(NoiseRange r, const char* what) {
  if (!(r.lo >= 0) || !(r.hi >= r.lo) || !std::isfinite(r.hi)) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad ") + what + " range");
  }
}

}  // namespace

PoseTangent sample_noise(NoiseRange pos_cm, NoiseRange rot_deg, Rng& rng) {
  check_range(pos_cm, "position");
  check_range(rot_deg, "rotation");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  PoseTangent d;
  const Vec3 axis = random_unit(rng);
  const double angle = rot_deg.lo + (rot_deg.hi - rot_deg.lo) * u01(rng);
  d.omega = axis * (angle * kPi / 180.0);
  const Vec3 dir = random_unit(rng);
  const double dist = pos_cm.lo + (pos_cm.hi - pos_cm.lo) * u01(rng);
  d.nu = dir * (dist * 0.01);
  return d;
}

Extrinsic perturb(const Extrinsic& gt, const PoseTangent& noise) { return retract(gt, noise); }

void NoiseGridSpec::validate() const {
  if (pos_ranges.empty() || rot_ranges.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "grid needs position and rotation ranges");
  }
  for (auto r : pos_ranges) check_range(r, "position");
  for (auto r : rot_ranges) check_range(r, "rotation");
  if (n_poses < 1 || m_samples < 1) throw Error(ErrorCode::kInvalidArgument, "n and m must be >= 1");
  if (diagonal && pos_ranges.size() != rot_ranges.size()) {
    throw Error(ErrorCode::kInvalidArgument, "diagonal grid needs as many rotation as position ranges");
  }
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::kConverged: return "converged";
    case Verdict::kPartial: return "partial";
    case Verdict::kFailed: return "failed";
  }
  return "?";
}

Verdict grid_verdict(const GridCellResult& c) {
  const double inj_rot = 0.5 * (c.rot.lo + c.rot.hi);
  const double inj_pos = 0.5 * (c.pos.lo + c.pos.hi);
  if (c.mean_rot_err < 1.0 && c.mean_pos_err < 0.1) return Verdict::kConverged;
  if (c.mean_rot_err < inj_rot && c.mean_pos_err < inj_pos && c.mean_rot_err < c.rot.lo &&
      c.mean_pos_err < c.pos.lo) {
    return Verdict::kConverged;
  }
  if (c.mean_rot_err > inj_rot || c.mean_pos_err > inj_pos) return Verdict::kFailed;
  return Verdict::kPartial;
}

std::vector<GridCellResult> convergence_grid(const GridScene& scene, const NoiseGridSpec& spec,
                                             const RefineConfig& cfg) {
  spec.validate();
  std::vector<std::pair<NoiseRange, NoiseRange>> cells;  // (rot, pos)
  if (spec.diagonal) {
    for (size_t k = 0; k < spec.rot_ranges.size(); ++k) cells.push_back({spec.rot_ranges[k], spec.pos_ranges[k]});
  } else {
    for (auto r : spec.rot_ranges)
      for (auto p : spec.pos_ranges) cells.push_back({r, p});
  }

  std::vector<GridCellResult> out;
  CoverageRasterizer raster(scene.K, cfg.supersample);
  for (size_t c = 0; c < cells.size(); ++c) {
    GridCellResult cell;
    cell.rot = cells[c].first;
    cell.pos = cells[c].second;
    std::vector<double> rot_i, pos_i;
    for (int i = 0; i < spec.n_poses; ++i) {
      Rng cam_rng = make_rng({spec.seed, c, static_cast<std::uint64_t>(i)});
      const Extrinsic gt = sample_camera(scene.model, scene.frames, {}, scene.K,
                                         scene.camera_distance, cam_rng);
      std::vector<ImageF> targets;
      for (const auto& q : scene.frames) {
        raster.rasterize(RenderScene::from_robot(scene.model, q), gt);
        targets.push_back(raster.coverage());
      }
      MaskLoss loss(scene.model, scene.frames, targets, scene.K, cfg.supersample);
      const LossFn fn = [&loss](const Extrinsic& T) { return loss(T); };
      double sum_rot = 0.0, sum_pos = 0.0;
      for (int j = 0; j < spec.m_samples; ++j) {
        Rng noise_rng = make_rng({spec.seed, c, static_cast<std::uint64_t>(i),
                                  static_cast<std::uint64_t>(j)});
        const Extrinsic T0 = perturb(gt, sample_noise(cell.pos, cell.rot, noise_rng));
        Extrinsic result = T0;
        try {
          const RefineReport report = refine(fn, T0, cfg);
          result = report.final_extrinsic;
          if (report.zero_gradient) ++cell.failed_samples;
        } catch (const Error&) {
          ++cell.failed_samples;
        }
        const PoseError e = pose_error(result, gt);
        sum_rot += e.rot_deg;
        sum_pos += e.pos_m * 100.0;
      }
      rot_i.push_back(sum_rot / spec.m_samples);
      pos_i.push_back(sum_pos / spec.m_samples);
    }
    auto mean_std = [](const std::vector<double>& v, double& mean, double& stdev) {
      mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      stdev = std::sqrt(var / static_cast<double>(v.size()));
    };
    mean_std(rot_i, cell.mean_rot_err, cell.std_rot_err);
    mean_std(pos_i, cell.mean_pos_err, cell.std_pos_err);
    cell.verdict = grid_verdict(cell);
    out.push_back(cell);
  }
  return out;
}

void save_grid_csv(const std::string& path, const std::vector<GridCellResult>& cells) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << "rot_lo,rot_hi,pos_lo,pos_hi,mean_rot,std_rot,mean_pos,std_pos,verdict\n"
      << std::setprecision(10);
  for (const auto& c : cells) {
    out << c.rot.lo << ',' << c.rot.hi << ',' << c.pos.lo << ',' << c.pos.hi << ','
        << c.mean_rot_err << ',' << c.std_rot_err << ',' << c.mean_pos_err << ','
        << c.std_pos_err << ',' << to_string(c.verdict) << '\n';
  }
}

std::string grid_table(const std::vector<GridCellResult>& cells) {
  auto label = [](NoiseRange r) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%g-%g", r.lo, r.hi);
    return std::string(buf);
  };
  std::vector<std::string> rows, cols;
  auto index_of = [](std::vector<std::string>& v, const std::string& s) {
    for (size_t i = 0; i < v.size(); ++i)
      if (v[i] == s) return i;
    v.push_back(s);
    return v.size() - 1;
  };
  std::vector<std::vector<const GridCellResult*>> grid;
  for (const auto& c : cells) {
    const size_t r = index_of(rows, label(c.rot));
    const size_t k = index_of(cols, label(c.pos));
    if (grid.size() <= r) grid.resize(r + 1);
    if (grid[r].size() <= k) grid[r].resize(k + 1, nullptr);
    grid[r][k] = &c;
  }
  const int w = 30;
  std::ostringstream os;
  os << std::left << std::setw(12) << "rot(deg)";
  for (const auto& c : cols) os << std::setw(w) << ("pos " + c + " cm");
  os << '\n';
  for (size_t r = 0; r < rows.size(); ++r) {
    for (int line = 0; line < 2; ++line) {
      os << std::setw(12) << (line == 0 ? rows[r] : "");
      for (size_t k = 0; k < cols.size(); ++k) {
        const GridCellResult* c = k < grid[r].size() ? grid[r][k] : nullptr;
        char buf[64] = "";
        if (c && line == 0) {
          std::snprintf(buf, sizeof buf, "%.2f +- %.2f [%s]", c->mean_rot_err, c->std_rot_err,
                        to_string(c->verdict).c_str());
        } else if (c) {
          std::snprintf(buf, sizeof buf, "%.2f +- %.2f", c->mean_pos_err, c->std_pos_err);
        }
        os << std::setw(w) << buf;
      }
      os << '\n';
    }
  }
  return os.str();
}

}  // namespace calib
