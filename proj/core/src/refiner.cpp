#include "calib/refiner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>

#include "calib/error.hpp"

namespace calib {

void RefineConfig::validate(int frame_count) const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(learning_rate) || !positive(fd_step_rot) || !positive(fd_step_trans)) {
    throw Error(ErrorCode::kInvalidArgument, "learning rate and fd steps must be > 0");
  }
  if (!std::isfinite(weight_decay) || weight_decay < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "weight decay must be >= 0");
  }
  if (max_iters < 0 || plateau_iters < 1 || max_halvings < 0 || plateau_tol < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "bad iteration limits");
  }
  if (supersample != 1 && supersample != 2 && supersample != 4) {
    throw Error(ErrorCode::kInvalidArgument, "supersample must be 1, 2 or 4");
  }
  if (frame_count < 1) throw Error(ErrorCode::kInvalidArgument, "episode has no frames");
  for (int f : frames) {
    if (f < 0 || f >= frame_count) {
      throw Error(ErrorCode::kInvalidArgument,
                  "refine frame " + std::to_string(f) + " outside episode");
    }
  }
}

std::string to_string(Optimizer o) {
  return o == Optimizer::kAdam ? "adam" : "gd";
}

Optimizer optimizer_from_string(const std::string& s) {
  if (s == "adam") return Optimizer::kAdam;
  if (s == "gd") return Optimizer::kGradientDescent;
  throw Error(ErrorCode::kInvalidArgument, "unknown optimizer '" + s + "' (adam, gd)");
}

std::vector<int> uniform_frames(int frame_count, int n) {
  std::vector<int> out;
  if (frame_count <= 0 || n <= 0) return out;
  if (n == 1 || frame_count == 1) return {0};
  for (int k = 0; k < n; ++k) {
    const int f = static_cast<int>(std::lround(static_cast<double>(k) * (frame_count - 1) / (n - 1)));
    if (out.empty() || out.back() != f) out.push_back(f);
  }
  return out;
}

std::vector<int> RefineConfig::resolved_frames(int frame_count) const {
  return frames.empty() ? uniform_frames(frame_count, kDefaultRefineFrames) : frames;
}

double mask_loss(const std::vector<ImageF>& targets, const std::vector<ImageF>& rendered) {
  if (targets.size() != rendered.size() || targets.empty()) {
    throw Error(ErrorCode::kShapeMismatch, "mask lists differ in length or are empty");
  }
  double total = 0.0;
  for (size_t f = 0; f < targets.size(); ++f) {
    const ImageF& a = targets[f];
    const ImageF& b = rendered[f];
    if (!a.same_shape(b) || a.data.empty()) {
      throw Error(ErrorCode::kShapeMismatch, "mask " + std::to_string(f) + " shape differs");
    }
    double sum = 0.0;
    for (size_t i = 0; i < a.data.size(); ++i) {
      const double d = static_cast<double>(a.data[i]) - b.data[i];
      sum += d * d;
    }
    total += sum / static_cast<double>(a.data.size());
  }
  return total / static_cast<double>(targets.size());
}

GradientSample fd_gradient(const LossFn& loss, const Extrinsic& T,
                           const RefineConfig& cfg, std::optional<LossSample> center) {
  GradientSample out;
  out.center = center ? *center : loss(T);
  Vec6 g;
  for (int i = 0; i < 6; ++i) {
    const double h = i < 3 ? cfg.fd_step_rot : cfg.fd_step_trans;
    Vec6 e = Vec6::Zero();
    e(i) = h;
    const LossSample plus = loss(retract(T, PoseTangent::from_vector(e)));
    const LossSample minus = loss(retract(T, PoseTangent::from_vector(-e)));
    out.empty_probes += (plus.empty ? 1 : 0) + (minus.empty ? 1 : 0);
    g(i) = (plus.value - minus.value) / (2.0 * h);
  }
  if (out.center.empty && out.empty_probes == 12) {
    throw Error(ErrorCode::kZeroGradientRegion,
                "robot not rendered at the pose or any probe around it");
  }
  out.gradient = PoseTangent::from_vector(g);
  return out;
}

MaskLoss::MaskLoss(const RobotModel& model, const std::vector<JointState>& joints,
                   const std::vector<ImageF>& targets, const Intrinsics& K, int ss)
    : targets_(targets), raster_(K, ss) {
  if (joints.size() != targets.size() || joints.empty()) {
    throw Error(ErrorCode::kShapeMismatch, "one target mask per constraint frame required");
  }
  for (size_t f = 0; f < joints.size(); ++f) {
    if (targets[f].width != K.width || targets[f].height != K.height) {
      throw Error(ErrorCode::kShapeMismatch,
                  "target mask " + std::to_string(f) + " does not match the intrinsics");
    }
    scenes_.push_back(RenderScene::from_robot(model, joints[f]));
    double sq = 0.0;
    for (float v : targets[f].data) sq += static_cast<double>(v) * v;
    target_sq_.push_back(sq);
  }
}

LossSample MaskLoss::operator()(const Extrinsic& T) {
  LossSample out;
  out.empty = true;
  const double pixels = static_cast<double>(raster_.intrinsics().width) *
                        raster_.intrinsics().height;
  for (size_t f = 0; f < scenes_.size(); ++f) {
    if (raster_.rasterize(scenes_[f], T) > 0) out.empty = false;
    out.value += raster_.squared_error(targets_[f], target_sq_[f]) / pixels;
  }
  out.value /= static_cast<double>(scenes_.size());
  return out;
}

RefineReport refine(const LossFn& loss, const Extrinsic& T0, const RefineConfig& cfg) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  RefineReport report;
  report.final_extrinsic = T0;
  Extrinsic pose = T0;
  Vec6 accumulated = Vec6::Zero();
  Vec6 m = Vec6::Zero(), v = Vec6::Zero();
  int adam_t = 0;
  const bool adam = cfg.optimizer == Optimizer::kAdam;

  LossSample current = loss(pose);
  if (current.empty) ++report.empty_render_events;
  report.loss_history.push_back(current.value);

  // The gradient only depends on the pose, so it is kept across rejected steps.
  std::optional<GradientSample> cached;
  int stall = 0;
  int iter = 0;
  while (iter < cfg.max_iters) {
    if (!cached) {
      try {
        cached = fd_gradient(loss, pose, cfg, current);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kZeroGradientRegion) throw;
        report.empty_render_events += 12;
        report.zero_gradient = true;
        break;
      }
      report.empty_render_events += cached->empty_probes;
    }
    const Vec6 g = cached->gradient.to_vector();

    Vec6 direction = g;
    if (adam) {
      ++adam_t;
      m = kBeta1 * m + (1.0 - kBeta1) * g;
      v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseProduct(g);
      const Vec6 m_hat = m / (1.0 - std::pow(kBeta1, adam_t));
      const Vec6 v_hat = v / (1.0 - std::pow(kBeta2, adam_t));
      direction = m_hat.array() / (v_hat.array().sqrt() + kEps);
    }

    double lr = cfg.learning_rate;
    Vec6 step = -lr * direction - cfg.weight_decay * accumulated;
    Extrinsic candidate = retract(pose, PoseTangent::from_vector(step));
    LossSample next = loss(candidate);
    if (next.empty) ++report.empty_render_events;
    if (cfg.safeguard) {
      for (int k = 0; k < cfg.max_halvings && next.value > current.value; ++k) {
        lr *= 0.5;
        step = -lr * direction - cfg.weight_decay * accumulated;
        candidate = retract(pose, PoseTangent::from_vector(step));
        next = loss(candidate);
        if (next.empty) ++report.empty_render_events;
      }
    }

    if (cfg.safeguard && next.value > current.value) {
      if (!adam) {
        // Pose, gradient and accumulated tangent are unchanged, so every
        // following iteration would repeat this one until the plateau rule
        // fires. Record them without recomputing.
        const int repeats = std::min(cfg.plateau_iters - stall, cfg.max_iters - iter);
        report.loss_history.insert(report.loss_history.end(), repeats, current.value);
        iter += repeats;
        stall += repeats;
        if (stall >= cfg.plateau_iters) report.converged = true;
        break;
      }
      // The moments still move, so the next attempt differs.
      report.loss_history.push_back(current.value);
      ++iter;
      if (++stall >= cfg.plateau_iters) {
        report.converged = true;
        break;
      }
      continue;
    }

    const double improvement = current.value - next.value;
    pose = candidate;
    accumulated += step;
    current = next;
    cached.reset();
    report.loss_history.push_back(current.value);
    ++iter;
    stall = improvement < cfg.plateau_tol ? stall + 1 : 0;
    if (stall >= cfg.plateau_iters) {
      report.converged = true;
      break;
    }
  }
  report.iters_run = iter;
  report.final_extrinsic = pose;
  return report;
}

RefineReport refine(const RobotModel& model, const std::vector<JointState>& joints,
                    const Intrinsics& K, const std::vector<ImageF>& targets,
                    const Extrinsic& T0, const RefineConfig& cfg) {
  cfg.validate(static_cast<int>(joints.size()));
  const std::vector<int> frames = cfg.resolved_frames(static_cast<int>(joints.size()));
  if (frames.size() != targets.size()) {
    throw Error(ErrorCode::kShapeMismatch,
                std::to_string(frames.size()) + " constraint frames but " +
                    std::to_string(targets.size()) + " target masks");
  }
  std::vector<JointState> selected;
  for (int f : frames) selected.push_back(joints[f]);
  MaskLoss loss(model, selected, targets, K, cfg.supersample);
  return refine([&loss](const Extrinsic& T) { return loss(T); }, T0, cfg);
}

void save_refine_report(const std::string& path, const RefineReport& report,
                        const Provenance& prov) {
  nlohmann::ordered_json j;
  j["final_extrinsic"] = nlohmann::json::parse(extrinsic_to_json(report.final_extrinsic));
  j["converged"] = report.converged;
  j["zero_gradient"] = report.zero_gradient;
  j["iters_run"] = report.iters_run;
  j["empty_render_events"] = report.empty_render_events;
  j["loss_history"] = report.loss_history;
  j["provenance"] = {{"tool", prov.tool},
                     {"version", prov.version},
                     {"config_hash", prov.config_hash},
                     {"seed", prov.seed}};
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << j.dump(2) << '\n';
}

void save_loss_curve_csv(const std::string& path, const RefineReport& report) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << "iter,loss\n" << std::setprecision(17);
  for (size_t i = 0; i < report.loss_history.size(); ++i) {
    out << i << ',' << report.loss_history[i] << '\n';
  }
}

}  // namespace calib
