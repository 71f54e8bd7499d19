#include "calib/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>

#include "calib/episode.hpp"
#include "calib/error.hpp"
#include "calib/image_io.hpp"
#include "calib/refiner.hpp"
#include "calib/renderer.hpp"

namespace calib {

namespace fs = std::filesystem;

namespace {

constexpr int kCylinderSegments = 24;

void append(TriangleMesh& dst, const TriangleMesh& src) {
  const int base = static_cast<int>(dst.vertices.size());
  dst.vertices.insert(dst.vertices.end(), src.vertices.begin(), src.vertices.end());
  for (const auto& t : src.triangles) dst.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
}

TriangleMesh box(const Vec3& lo, const Vec3& hi) {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(),
                            i & 4 ? hi.z() : lo.z());
  }
  const int faces[6][4] = {{0, 2, 3, 1}, {4, 5, 7, 6}, {0, 1, 5, 4},
                           {2, 6, 7, 3}, {0, 4, 6, 2}, {1, 3, 7, 5}};
  for (const auto& f : faces) {
    m.triangles.push_back({f[0], f[1], f[2]});
    m.triangles.push_back({f[0], f[2], f[3]});
  }
  return m;
}

// Closed cylinder around the local z axis.
TriangleMesh cylinder(double r, double z0, double z1) {
  TriangleMesh m;
  const int n = kCylinderSegments;
  for (int i = 0; i < n; ++i) {
    const double a = 2.0 * kPi * i / n;
    m.vertices.emplace_back(r * std::cos(a), r * std::sin(a), z0);
    m.vertices.emplace_back(r * std::cos(a), r * std::sin(a), z1);
  }
  const int c0 = 2 * n, c1 = 2 * n + 1;
  m.vertices.emplace_back(0.0, 0.0, z0);
  m.vertices.emplace_back(0.0, 0.0, z1);
  for (int i = 0; i < n; ++i) {
    const int j = (i + 1) % n;
    m.triangles.push_back({2 * i, 2 * j, 2 * j + 1});
    m.triangles.push_back({2 * i, 2 * j + 1, 2 * i + 1});
    m.triangles.push_back({c0, 2 * j, 2 * i});
    m.triangles.push_back({c1, 2 * i + 1, 2 * j + 1});
  }
  return m;
}

TriangleMesh merged(std::initializer_list<TriangleMesh> parts) {
  TriangleMesh m;
  for (const auto& p : parts) append(m, p);
  return m;
}

LinkSpec link(std::string name, double alpha, double a, double d, JointType type,
              TriangleMesh mesh) {
  LinkSpec l;
  l.name = std::move(name);
  l.mdh = {alpha, a, d, 0.0};
  l.joint_type = type;
  l.mesh = std::move(mesh);
  return l;
}

constexpr JointType kRev = JointType::kRevolute;
constexpr JointType kFix = JointType::kFixed;

// A beam along local +x of the given length, centred on the x axis.
TriangleMesh beam(double length, double half_y, double half_z) {
  return box(Vec3(0.0, -half_y, -half_z), Vec3(length, half_y, half_z));
}

}  // namespace

std::string to_string(SynthArm arm) {
  switch (arm) {
    case SynthArm::kSingleLink: return "single_link";
    case SynthArm::kPlanar3Dof: return "planar_3dof";
    case SynthArm::kSpatial6Dof: return "spatial_6dof";
  }
  return "?";
}

SynthArm synth_arm_from_string(const std::string& s) {
  if (s == "single_link") return SynthArm::kSingleLink;
  if (s == "planar_3dof") return SynthArm::kPlanar3Dof;
  if (s == "spatial_6dof") return SynthArm::kSpatial6Dof;
  throw Error(ErrorCode::kInvalidArgument, "unknown arm '" + s + "'");
}

MaskNoise MaskNoise::parse(const std::string& s) {
  MaskNoise n;
  if (s == "none") return n;
  const auto us = s.find('_');
  if (us == std::string::npos) throw Error(ErrorCode::kInvalidArgument, "bad mask noise '" + s + "'");
  const std::string kind = s.substr(0, us);
  try {
    n.amount = std::stod(s.substr(us + 1));
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "bad mask noise amount in '" + s + "'");
  }
  if (kind == "dilate") {
    n.kind = MaskNoiseKind::kDilate;
  } else if (kind == "erode") {
    n.kind = MaskNoiseKind::kErode;
  } else if (kind == "speckle") {
    n.kind = MaskNoiseKind::kSpeckle;
  } else {
    throw Error(ErrorCode::kInvalidArgument, "bad mask noise kind '" + kind + "'");
  }
  if (n.amount < 0 || (n.kind == MaskNoiseKind::kSpeckle && n.amount > 1) ||
      (n.kind != MaskNoiseKind::kSpeckle && n.amount != std::floor(n.amount))) {
    throw Error(ErrorCode::kInvalidArgument, "mask noise amount out of range in '" + s + "'");
  }
  return n;
}

std::string MaskNoise::to_string() const {
  switch (kind) {
    case MaskNoiseKind::kNone: return "none";
    case MaskNoiseKind::kDilate: return "dilate_" + std::to_string(static_cast<int>(amount));
    case MaskNoiseKind::kErode: return "erode_" + std::to_string(static_cast<int>(amount));
    case MaskNoiseKind::kSpeckle: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "speckle_%g", amount);
      return buf;
    }
  }
  return "none";
}

void SynthSpec::validate() const {
  if (n_frames < 10) throw Error(ErrorCode::kInvalidArgument, "n_frames must be >= 10");
  if (!(camera_distance > 0)) throw Error(ErrorCode::kInvalidArgument, "camera_distance must be > 0");
  if (!(track_noise_px >= 0)) throw Error(ErrorCode::kInvalidArgument, "track_noise_px must be >= 0");
  if (!mark_offset.allFinite()) throw Error(ErrorCode::kInvalidArgument, "mark_offset must be finite");
  if (width < 16 || height < 16 || !(focal_px > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "bad image size or focal length");
  }
  if (supersample != 1 && supersample != 2 && supersample != 4) {
    throw Error(ErrorCode::kInvalidArgument, "supersample must be 1, 2 or 4");
  }
}

RobotModel make_arm(SynthArm arm) {
  RobotModel m;
  switch (arm) {
    case SynthArm::kSingleLink:
      m.links = {
          link("base", 0, 0, 0.30, kFix, cylinder(0.12, -0.30, 0.0)),
          link("arm", 0, 0, 0, kRev,
               merged({cylinder(0.08, -0.06, 0.06), beam(0.45, 0.05, 0.05)})),
          link("tool", 0, 0.45, 0, kFix, box(Vec3(-0.04, -0.04, -0.03), Vec3(0.04, 0.04, 0.08))),
      };
      break;
    case SynthArm::kPlanar3Dof:
      m.links = {
          link("base", 0, 0, 0.30, kFix, cylinder(0.12, -0.30, 0.0)),
          link("upper_arm", -kPi / 2, 0, 0, kRev,
               merged({cylinder(0.08, -0.08, 0.08), beam(0.35, 0.06, 0.05)})),
          link("forearm", 0, 0.35, 0, kRev,
               merged({cylinder(0.065, -0.065, 0.065), beam(0.30, 0.05, 0.045)})),
          link("wrist", 0, 0.30, 0, kRev,
               merged({cylinder(0.05, -0.05, 0.05), beam(0.12, 0.04, 0.035)})),
          link("tool", 0, 0.12, 0, kFix, box(Vec3(0.0, -0.05, -0.03), Vec3(0.08, 0.05, 0.03))),
      };
      break;
    case SynthArm::kSpatial6Dof:
      m.links = {
          link("base", 0, 0, 0, kFix, cylinder(0.13, 0.0, 0.30)),
          link("shoulder", 0, 0, 0.42, kRev, cylinder(0.09, -0.12, 0.0)),
          link("upper_arm", -kPi / 2, 0, 0, kRev,
               merged({cylinder(0.08, -0.09, 0.09), beam(0.35, 0.06, 0.06)})),
          link("forearm", 0, 0.35, 0, kRev,
               merged({cylinder(0.065, -0.07, 0.07), beam(0.30, 0.05, 0.05)})),
          link("wrist_pitch", 0, 0.30, 0, kRev,
               merged({cylinder(0.05, -0.055, 0.055), beam(0.08, 0.04, 0.04)})),
          link("wrist_yaw", -kPi / 2, 0.08, 0, kRev, cylinder(0.045, -0.045, 0.045)),
          link("flange", kPi / 2, 0, 0, kRev, cylinder(0.035, 0.0, 0.06)),
          link("tool", 0, 0, 0.06, kFix, box(Vec3(-0.05, -0.02, 0.0), Vec3(0.05, 0.02, 0.07))),
      };
      break;
  }
  m.eef_link_index = static_cast<int>(m.links.size()) - 1;
  m.validate();
  return m;
}

std::vector<JointState> make_joint_path(const RobotModel& model, SynthArm arm,
                                        int n_frames, Rng& rng) {
  struct Wave {
    double center, amplitude, cycles;
  };
  std::vector<Wave> waves;
  switch (arm) {
    case SynthArm::kSingleLink:
      waves = {{0.0, 1.2, 1.0}};
      break;
    case SynthArm::kPlanar3Dof:
      waves = {{-0.5, 0.4, 1.0}, {1.2, 0.5, 1.5}, {0.4, 0.4, 0.75}};
      break;
    case SynthArm::kSpatial6Dof:
      waves = {{0.0, 0.9, 1.0},  {-0.5, 0.35, 1.5}, {1.3, 0.45, 0.75},
               {0.3, 0.4, 1.25}, {0.0, 0.3, 2.0},   {0.0, 0.5, 1.75}};
      break;
  }
  if (static_cast<int>(waves.size()) != model.actuated_count()) {
    throw Error(ErrorCode::kJointDimensionMismatch, "joint path does not fit the arm");
  }
  std::uniform_real_distribution<double> phase(0.0, 2.0 * kPi);
  std::vector<double> phases;
  for (size_t i = 0; i < waves.size(); ++i) phases.push_back(phase(rng));
  std::vector<JointState> path(n_frames);
  for (int t = 0; t < n_frames; ++t) {
    const double s = static_cast<double>(t) / (n_frames - 1);
    path[t].t = t;
    for (size_t i = 0; i < waves.size(); ++i) {
      path[t].q.push_back(waves[i].center +
                          waves[i].amplitude * std::sin(2.0 * kPi * waves[i].cycles * s + phases[i]));
    }
  }
  return path;
}

Intrinsics make_intrinsics(int width, int height, double focal_px) {
  Intrinsics K;
  K.fx = K.fy = focal_px;
  K.cx = 0.5 * width;
  K.cy = 0.5 * height;
  K.width = width;
  K.height = height;
  K.validate();
  return K;
}

Extrinsic sample_camera(const RobotModel& model,
                        const std::vector<JointState>& check_frames,
                        const std::vector<Vec3>& must_see, const Intrinsics& K,
                        double distance, Rng& rng) {
  std::vector<RenderScene> scenes;
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& q : check_frames) {
    scenes.push_back(RenderScene::from_robot(model, q));
    for (const Vec3& v : scenes.back().vertices) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
  }
  const Vec3 center = 0.5 * (lo + hi);
  std::uniform_real_distribution<double> azimuth(0.0, 2.0 * kPi);
  std::uniform_real_distribution<double> elevation(15.0 * kPi / 180.0, 40.0 * kPi / 180.0);
  std::uniform_real_distribution<double> jitter(-0.05, 0.05);
  CoverageRasterizer raster(K, 1);
  const double pixels = static_cast<double>(K.width) * K.height;
  for (int attempt = 0; attempt < kMaxPlacementTries; ++attempt) {
    const double az = azimuth(rng);
    const double el = elevation(rng);
    const Vec3 target = center + Vec3(jitter(rng), jitter(rng), jitter(rng));
    const Vec3 eye = target + distance * Vec3(std::cos(el) * std::cos(az),
                                              std::cos(el) * std::sin(az), std::sin(el));
    const Extrinsic T = look_at(eye, target, Vec3::UnitZ());
    bool ok = true;
    for (const auto& tp : project_trajectory(must_see, T, K)) {
      if (!tp.visible) {
        ok = false;
        break;
      }
    }
    for (size_t f = 0; ok && f < scenes.size(); ++f) {
      ok = static_cast<double>(raster.rasterize(scenes[f], T)) > kMinPlacementCoverage * pixels;
    }
    if (ok) return T;
  }
  throw Error(ErrorCode::kPlacementFailure,
              "no camera placement with the robot in view after " +
                  std::to_string(kMaxPlacementTries) + " samples");
}

ImageF corrupt_mask(const ImageF& coverage, const MaskNoise& noise, Rng& rng) {
  if (noise.kind == MaskNoiseKind::kNone) return coverage;
  ImageF out = coverage;
  if (noise.kind == MaskNoiseKind::kSpeckle) {
    std::bernoulli_distribution flip(noise.amount);
    for (float& v : out.data)
      if (flip(rng)) v = 1.0f - v;
    return out;
  }
  const int k = static_cast<int>(noise.amount);
  const bool dilate = noise.kind == MaskNoiseKind::kDilate;
  for (int y = 0; y < coverage.height; ++y) {
    for (int x = 0; x < coverage.width; ++x) {
      float best = coverage.at(x, y);
      for (int dy = -k; dy <= k; ++dy) {
        for (int dx = -k; dx <= k; ++dx) {
          const int xx = x + dx, yy = y + dy;
          // Outside the image counts as background.
          const float v = (xx < 0 || yy < 0 || xx >= coverage.width || yy >= coverage.height)
                              ? 0.0f
                              : coverage.at(xx, yy);
          best = dilate ? std::max(best, v) : std::min(best, v);
        }
      }
      out.at(x, y) = best;
    }
  }
  return out;
}

ImageRgb coverage_to_frame(const ImageF& coverage) {
  ImageRgb img;
  img.width = coverage.width;
  img.height = coverage.height;
  img.data.resize(static_cast<size_t>(img.width) * img.height * 3);
  const double bg[3] = {46, 52, 64};
  const double fg[3] = {208, 135, 112};
  for (size_t i = 0; i < coverage.data.size(); ++i) {
    const double c = coverage.data[i];
    for (int ch = 0; ch < 3; ++ch) {
      img.data[3 * i + ch] = static_cast<std::uint8_t>(std::lround(bg[ch] + c * (fg[ch] - bg[ch])));
    }
  }
  return img;
}

namespace {

// Random features with channel 0 zeroed, and the one-hot e0 at (u, v): the
// cosine similarity to e0 is 1 there and exactly 0 everywhere else.
FeatureMap delta_features(int width, int height, int u, int v, Rng& rng) {
  FeatureMap F(height, width, kFeatureChannels);
  std::normal_distribution<float> n(0.0f, 1.0f);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      float* f = F.at(x, y);
      for (int c = 1; c < kFeatureChannels; ++c) f[c] = n(rng);
    }
  }
  float* f = F.at(u, v);
  std::fill(f, f + kFeatureChannels, 0.0f);
  f[0] = 1.0f;
  return F;
}

}  // namespace

SynthEpisode make_synth_episode(const SynthSpec& spec) {
  spec.validate();
  SynthEpisode ep;
  ep.spec = spec;
  ep.model = make_arm(spec.arm);
  ep.K = make_intrinsics(spec.width, spec.height, spec.focal_px);

  Rng path_rng = make_rng({spec.seed, 1});
  ep.joints = make_joint_path(ep.model, spec.arm, spec.n_frames, path_rng);

  for (const auto& q : ep.joints) {
    const auto poses = forward_kinematics(ep.model, q);
    ep.mark_path.push_back(
        transform_point(poses[ep.model.eef_link_index], ep.model.eef_offset + spec.mark_offset));
  }

  std::vector<JointState> check;
  for (int f : uniform_frames(spec.n_frames, kDefaultRefineFrames)) check.push_back(ep.joints[f]);
  Rng cam_rng = make_rng({spec.seed, 2});
  ep.gt = sample_camera(ep.model, check, ep.mark_path, ep.K, spec.camera_distance, cam_rng);

  Rng track_rng = make_rng({spec.seed, 3});
  std::normal_distribution<double> px_noise(0.0, 1.0);
  for (const auto& tp : project_trajectory(ep.mark_path, ep.gt, ep.K)) {
    TrackPoint p;
    p.u = tp.px.x();
    p.v = tp.px.y();
    if (spec.track_noise_px > 0) {
      p.u += spec.track_noise_px * px_noise(track_rng);
      p.v += spec.track_noise_px * px_noise(track_rng);
    }
    p.visible = tp.visible && p.u >= 0 && p.v >= 0 && p.u < ep.K.width && p.v < ep.K.height;
    ep.track.points.push_back(p);
  }

  Rng mask_rng = make_rng({spec.seed, 4});
  for (const auto& q : ep.joints) {
    RenderBundle b = render(ep.model, q, ep.gt, ep.K, spec.supersample);
    ep.masks.push_back(corrupt_mask(b.coverage, spec.mask_noise, mask_rng));
    ep.clean_masks.push_back(std::move(b.coverage));
  }

  Rng feat_rng = make_rng({spec.seed, 5});
  const Vec2 m0 = project(ep.K, transform_point(ep.gt, ep.mark_path[0]));
  const int u0 = std::clamp(static_cast<int>(std::lround(m0.x())), 0, ep.K.width - 1);
  const int v0 = std::clamp(static_cast<int>(std::lround(m0.y())), 0, ep.K.height - 1);
  ep.frame0_features = delta_features(ep.K.width, ep.K.height, u0, v0, feat_rng);
  ep.frame0_mark = {static_cast<double>(u0), static_cast<double>(v0), MarkSource::kPropagated};
  std::uniform_int_distribution<int> ru(0, ep.K.width - 1), rv(0, ep.K.height - 1);
  const int ur = ru(feat_rng), vr = rv(feat_rng);
  ep.reference_features = delta_features(ep.K.width, ep.K.height, ur, vr, feat_rng);
  ep.reference_mark = {static_cast<double>(ur), static_cast<double>(vr), MarkSource::kHumanAnnotated};
  return ep;
}

void write_synth_episode(const std::string& dir, const SynthEpisode& ep) {
  const fs::path root(dir);
  fs::create_directories(root / layout::kFrames);
  fs::create_directories(root / layout::kMasks);
  fs::create_directories(root / "features");
  for (size_t t = 0; t < ep.joints.size(); ++t) {
    const std::string name = frame_file_name(static_cast<int>(t));
    write_png_rgb((root / layout::kFrames / name).string(), coverage_to_frame(ep.clean_masks[t]));
    write_png_gray((root / layout::kMasks / name).string(), coverage_to_mask(ep.masks[t]));
  }
  save_joints_csv((root / layout::kJoints).string(), ep.joints);
  save_intrinsics((root / layout::kIntrinsics).string(), ep.K);
  save_robot((root / layout::kRobot).string(), ep.model);
  save_track_csv((root / layout::kTrack).string(), ep.track);
  write_fmap((root / layout::kFrame0Features).string(), ep.frame0_features);
  write_fmap((root / layout::kReferenceFeatures).string(), ep.reference_features);
  save_mark((root / layout::kReferenceMark).string(), ep.reference_mark);
  save_extrinsic((root / layout::kGtExtrinsic).string(), ep.gt);
}

SynthEpisode generate_episode(const SynthSpec& spec, const std::string& dir) {
  SynthEpisode ep = make_synth_episode(spec);
  write_synth_episode(dir, ep);
  return ep;
}

}  // namespace calib
