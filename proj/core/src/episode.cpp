#include "calib/episode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <sstream>

#include "calib/error.hpp"
#include "calib/image_io.hpp"

namespace calib {

namespace fs = std::filesystem;

std::string frame_file_name(int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.png", t);
  return buf;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  return out;
}

double to_double(const std::string& s, const std::string& where) {
  try {
    size_t used = 0;
    const double v = std::stod(s, &used);
    if (used == s.size() && std::isfinite(v)) return v;
  } catch (const std::exception&) {
  }
  throw Error(ErrorCode::kParseError, where + ": bad number '" + s + "'");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<JointState> load_joints_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kParseError, path + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split(line, ',');
  if (header.size() < 2 || header[0] != "t") {
    throw Error(ErrorCode::kParseError, path + ": expected header t,q1..qn");
  }
  for (size_t i = 1; i < header.size(); ++i) {
    if (header[i] != "q" + std::to_string(i)) {
      throw Error(ErrorCode::kParseError, path + ": expected column q" + std::to_string(i));
    }
  }
  std::vector<JointState> joints;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(row);
    const auto cells = split(line, ',');
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kParseError, where + ": expected " + std::to_string(header.size()) + " columns");
    }
    JointState js;
    js.t = static_cast<int>(joints.size());
    if (to_double(cells[0], where) != js.t) {
      throw Error(ErrorCode::kParseError, where + ": rows must be t=0,1,2,...");
    }
    for (size_t i = 1; i < cells.size(); ++i) js.q.push_back(to_double(cells[i], where));
    joints.push_back(std::move(js));
  }
  return joints;
}

void save_joints_csv(const std::string& path, const std::vector<JointState>& joints) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  const size_t n = joints.empty() ? 0 : joints.front().q.size();
  out << "t";
  for (size_t i = 1; i <= n; ++i) out << ",q" << i;
  out << '\n' << std::setprecision(17);
  for (size_t t = 0; t < joints.size(); ++t) {
    out << t;
    for (double q : joints[t].q) out << ',' << q;
    out << '\n';
  }
}

Intrinsics load_intrinsics(const std::string& path) {
  Intrinsics K;
  try {
    const auto j = nlohmann::json::parse(read_text(path));
    K.fx = j.at("fx").get<double>();
    K.fy = j.at("fy").get<double>();
    K.cx = j.at("cx").get<double>();
    K.cy = j.at("cy").get<double>();
    K.width = j.at("width").get<int>();
    K.height = j.at("height").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path + ": " + e.what());
  }
  K.validate();
  return K;
}

void save_intrinsics(const std::string& path, const Intrinsics& K) {
  nlohmann::ordered_json j;
  j["fx"] = K.fx;
  j["fy"] = K.fy;
  j["cx"] = K.cx;
  j["cy"] = K.cy;
  j["width"] = K.width;
  j["height"] = K.height;
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << j.dump(2) << '\n';
}

std::string Episode::path(const std::string& rel) const { return (fs::path(dir) / rel).string(); }

ImageF Episode::load_mask(int t) const {
  if (mask_paths.empty()) throw Error(ErrorCode::kIoError, path(layout::kMasks) + " missing");
  const ImageU8 m = read_png_gray(mask_paths.at(t));
  if (m.width != K.width || m.height != K.height) {
    throw Error(ErrorCode::kShapeMismatch, mask_paths[t] + " size differs from intrinsics");
  }
  return mask_to_coverage(m);
}

namespace {

// Sorted *.png files of a directory; they must be exactly 000000.png..N-1.
std::vector<std::string> numbered_pngs(const fs::path& d) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(d)) {
    if (e.is_regular_file() && e.path().extension() == ".png") names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  std::vector<std::string> out;
  for (size_t t = 0; t < names.size(); ++t) {
    if (names[t] != frame_file_name(static_cast<int>(t))) {
      throw Error(ErrorCode::kParseError, (d / names[t]).string() + ": expected " +
                                              frame_file_name(static_cast<int>(t)));
    }
    out.push_back((d / names[t]).string());
  }
  return out;
}

void require(const fs::path& p) {
  if (!fs::exists(p)) throw Error(ErrorCode::kIoError, p.string() + " missing");
}

}  // namespace

Episode load_episode(const std::string& dir) {
  Episode ep;
  ep.dir = dir;
  const fs::path root(dir);
  if (!fs::is_directory(root)) throw Error(ErrorCode::kIoError, dir + " is not a directory");
  require(root / layout::kJoints);
  require(root / layout::kIntrinsics);
  require(root / layout::kRobot);
  require(root / layout::kFrames);

  ep.joints = load_joints_csv((root / layout::kJoints).string());
  ep.K = load_intrinsics((root / layout::kIntrinsics).string());
  ep.robot = load_robot((root / layout::kRobot).string());
  ep.frame_paths = numbered_pngs(root / layout::kFrames);

  const int n = ep.frame_count();
  if (static_cast<int>(ep.frame_paths.size()) != n) {
    throw Error(ErrorCode::kLengthMismatch,
                ep.path(layout::kFrames) + " has " + std::to_string(ep.frame_paths.size()) +
                    " frames but " + ep.path(layout::kJoints) + " has " + std::to_string(n) + " rows");
  }
  if (n < kMinCorrespondences) {
    throw Error(ErrorCode::kTooFewVisible,
                ep.path(layout::kJoints) + ": " + std::to_string(n) + " frames, need at least " +
                    std::to_string(kMinCorrespondences));
  }
  for (const auto& js : ep.joints) {
    if (static_cast<int>(js.q.size()) != ep.robot.actuated_count()) {
      throw Error(ErrorCode::kJointDimensionMismatch,
                  ep.path(layout::kJoints) + ": " + std::to_string(js.q.size()) +
                      " joints per row, robot has " + std::to_string(ep.robot.actuated_count()));
    }
  }
  const ImageRgb f0 = read_png_rgb(ep.frame_paths[0]);
  if (f0.width != ep.K.width || f0.height != ep.K.height) {
    throw Error(ErrorCode::kShapeMismatch, ep.frame_paths[0] + " size differs from intrinsics");
  }

  if (fs::exists(root / layout::kGtExtrinsic)) {
    ep.gt_extrinsic = load_extrinsic((root / layout::kGtExtrinsic).string());
  }
  if (fs::exists(root / layout::kTrack)) {
    ep.track = load_track_csv((root / layout::kTrack).string());
    try {
      ep.track->validate(n, ep.K);
    } catch (const Error& e) {
      throw Error(e.code(), ep.path(layout::kTrack) + ": " + e.what());
    }
  }
  if (fs::is_directory(root / layout::kMasks)) {
    ep.mask_paths = numbered_pngs(root / layout::kMasks);
    if (static_cast<int>(ep.mask_paths.size()) != n) {
      throw Error(ErrorCode::kLengthMismatch,
                  ep.path(layout::kMasks) + " has " + std::to_string(ep.mask_paths.size()) +
                      " masks for " + std::to_string(n) + " frames");
    }
  }
  if (fs::exists(root / layout::kMark)) ep.mark = load_mark((root / layout::kMark).string());
  ep.has_features = fs::exists(root / layout::kFrame0Features) &&
                    fs::exists(root / layout::kReferenceFeatures) &&
                    fs::exists(root / layout::kReferenceMark);
  return ep;
}

}  // namespace calib
