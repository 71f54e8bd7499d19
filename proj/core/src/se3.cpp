#include "calib/se3.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "calib/error.hpp"
#include "json.hpp"

namespace calib {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kInvalidRotation: return "InvalidRotation";
    case ErrorCode::kPointBehindCamera: return "PointBehindCamera";
    case ErrorCode::kJointDimensionMismatch: return "JointDimensionMismatch";
    case ErrorCode::kOutOfBounds: return "OutOfBounds";
    case ErrorCode::kChannelMismatch: return "ChannelMismatch";
    case ErrorCode::kZeroQueryFeature: return "ZeroQueryFeature";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kTooFewVisible: return "TooFewVisible";
    case ErrorCode::kDegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::kSolverFailure: return "SolverFailure";
    case ErrorCode::kNoConsensus: return "NoConsensus";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kZeroGradientRegion: return "ZeroGradientRegion";
    case ErrorCode::kPlacementFailure: return "PlacementFailure";
    case ErrorCode::kConventionMismatch: return "ConventionMismatch";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
  }
  return "Unknown";
}

double orthonormality_error(const Mat3& R) {
  const double ortho = (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  return std::max(ortho, std::abs(R.determinant() - 1.0));
}

Extrinsic::Extrinsic(const Mat3& rotation, const Vec3& translation,
                     double tolerance)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw Error(ErrorCode::kInvalidArgument, "non-finite extrinsic");
  }
  if (orthonormality_error(rotation) > tolerance) {
    throw Error(ErrorCode::kInvalidRotation,
                "rotation is not orthonormal with det +1");
  }
}

Extrinsic Extrinsic::from_matrix(const Mat4& m, bool reorthonormalize) {
  Mat3 r = m.topLeftCorner<3, 3>();
  if (reorthonormalize) {
    Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    d(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0
                  ? -1.0
                  : 1.0;
    r = svd.matrixU() * d * svd.matrixV().transpose();
  }
  return Extrinsic(r, m.topRightCorner<3, 1>());
}

Mat4 Extrinsic::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation_;
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

Extrinsic Extrinsic::inverse() const {
  const Mat3 rt = rotation_.transpose();
  return Extrinsic(Unchecked{}, rt, -(rt * translation_));
}

Extrinsic Extrinsic::operator*(const Extrinsic& other) const {
  return Extrinsic(Unchecked{}, rotation_ * other.rotation_,
                   rotation_ * other.translation_ + translation_);
}

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "image size must be positive");
  }
  if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
    throw Error(ErrorCode::kInvalidArgument,
                "principal point outside the image");
  }
}

PoseTangent PoseTangent::from_vector(const Vec6& v) {
  return PoseTangent{v.head<3>(), v.tail<3>()};
}

Vec6 PoseTangent::to_vector() const {
  Vec6 v;
  v << omega, nu;
  return v;
}

bool PoseTangent::is_finite() const {
  return omega.allFinite() && nu.allFinite();
}

Vec3 transform_point(const Extrinsic& T, const Vec3& p) {
  return T.rotation() * p + T.translation();
}

Vec2 project(const Intrinsics& K, const Vec3& pc, double z_min) {
  if (!(pc.z() > z_min)) {
    throw Error(ErrorCode::kPointBehindCamera, "point at or behind z_min");
  }
  return Vec2(K.fx * pc.x() / pc.z() + K.cx, K.fy * pc.y() / pc.z() + K.cy);
}

Mat3 exp_so3(const Vec3& omega) {
  const double theta2 = omega.squaredNorm();
  Mat3 w;
  w << 0.0, -omega.z(), omega.y(),
       omega.z(), 0.0, -omega.x(),
       -omega.y(), omega.x(), 0.0;
  if (theta2 == 0.0) return Mat3::Identity();
  double a, b;
  if (theta2 < 1e-12) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Mat3::Identity() + a * w + b * (w * w);
}

Vec3 log_so3(const Mat3& R) {
  const Eigen::AngleAxisd aa(R);
  return aa.axis() * aa.angle();
}

Extrinsic retract(const Extrinsic& T, const PoseTangent& d) {
  return Extrinsic(Extrinsic::Unchecked{}, exp_so3(d.omega) * T.rotation(),
                   T.translation() + d.nu);
}

double rotation_geodesic_deg(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * 180.0 / kPi;
}

double translation_dist_m(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

Extrinsic look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "look_at: up parallel to view");
  }
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 base_from_cam;
  base_from_cam.col(0) = x;
  base_from_cam.col(1) = y;
  base_from_cam.col(2) = z;
  const Mat3 r = base_from_cam.transpose();
  return Extrinsic(r, -(r * eye));
}

std::string extrinsic_to_json(const Extrinsic& T) {
  nlohmann::ordered_json j;
  const Mat4 m = T.matrix();
  std::vector<double> flat;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) flat.push_back(m(r, c));
  j["matrix"] = flat;
  j["convention"] = kExtrinsicConvention;
  return j.dump(2);
}

Extrinsic extrinsic_from_json(const std::string& text, std::string* convention) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("extrinsic JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("matrix") || !j["matrix"].is_array() ||
      j["matrix"].size() != 16) {
    throw Error(ErrorCode::kParseError, "extrinsic JSON needs a 16-number \"matrix\"");
  }
  Mat4 m;
  for (int i = 0; i < 16; ++i) {
    if (!j["matrix"][i].is_number()) {
      throw Error(ErrorCode::kParseError, "extrinsic matrix entry is not a number");
    }
    m(i / 4, i % 4) = j["matrix"][i].get<double>();
  }
  if (convention) {
    *convention = j.value("convention", std::string());
  }
  // Written files carry 17 significant digits; allow for text round-off.
  return Extrinsic(m.topLeftCorner<3, 3>(), m.topRightCorner<3, 1>(), 1e-6);
}

void save_extrinsic(const std::string& path, const Extrinsic& T) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path);
  out << extrinsic_to_json(T) << "\n";
}

Extrinsic load_extrinsic(const std::string& path, std::string* convention) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return extrinsic_from_json(ss.str(), convention);
}

}  // namespace calib
