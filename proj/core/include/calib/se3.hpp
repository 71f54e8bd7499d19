#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <string>

namespace calib {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kDefaultZMin = 1e-6;
inline constexpr double kRotationTolerance = 1e-9;

/// Camera axis convention written into every extrinsic file.
inline constexpr const char* kExtrinsicConvention =
    "camera_from_base, z_forward_y_down";

/// Rigid transform. As a camera extrinsic it maps base-frame points into the
/// camera frame (P_c = R * P_b + t); the same type carries base-from-link
/// poses out of forward kinematics.
class Extrinsic {
 public:
  Extrinsic() : rotation_(Mat3::Identity()), translation_(Vec3::Zero()) {}

  /// Throws kInvalidRotation unless |R^T R - I| and |det R - 1| are within
  /// `tolerance`, or kInvalidArgument on non-finite input.
  Extrinsic(const Mat3& rotation, const Vec3& translation,
            double tolerance = kRotationTolerance);

  static Extrinsic identity() { return Extrinsic(); }
  /// Nearest rotation (SVD projection) is taken before construction.
  static Extrinsic from_matrix(const Mat4& m, bool reorthonormalize = false);

  const Mat3& rotation() const { return rotation_; }
  const Vec3& translation() const { return translation_; }
  Mat4 matrix() const;

  Extrinsic inverse() const;
  /// (*this) ∘ other: apply `other` first.
  Extrinsic operator*(const Extrinsic& other) const;

  bool operator==(const Extrinsic& other) const = default;

 private:
  struct Unchecked {};
  Extrinsic(Unchecked, const Mat3& r, const Vec3& t)
      : rotation_(r), translation_(t) {}
  friend Extrinsic retract(const Extrinsic&, const struct PoseTangent&);

  Mat3 rotation_;
  Vec3 translation_;
};

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  /// Throws kInvalidArgument when fx, fy <= 0 or the principal point lies
  /// outside [0, width) x [0, height).
  void validate() const;
  bool operator==(const Intrinsics&) const = default;
};

/// Left-multiplied rotation increment (axis-angle, radians) and additive
/// translation increment (meters).
struct PoseTangent {
  Vec3 omega = Vec3::Zero();
  Vec3 nu = Vec3::Zero();

  static PoseTangent from_vector(const Vec6& v);
  /// Ordered (omega_x, omega_y, omega_z, nu_x, nu_y, nu_z).
  Vec6 to_vector() const;
  bool is_finite() const;
};

Vec3 transform_point(const Extrinsic& T, const Vec3& p);

/// Pinhole projection with +Z forward, +X right, +Y down. Throws
/// kPointBehindCamera when pc.z <= z_min.
Vec2 project(const Intrinsics& K, const Vec3& pc, double z_min = kDefaultZMin);

/// Rodrigues exponential of an axis-angle vector.
Mat3 exp_so3(const Vec3& omega);
/// Inverse of exp_so3 for angles in [0, pi].
Vec3 log_so3(const Mat3& R);

/// rotation <- exp(omega) * R, translation <- t + nu.
Extrinsic retract(const Extrinsic& T, const PoseTangent& d);

/// Geodesic angle between two rotations in degrees (arccos argument clamped).
double rotation_geodesic_deg(const Mat3& a, const Mat3& b);
double translation_dist_m(const Vec3& a, const Vec3& b);

/// Largest deviation of R from orthonormality: max(|R^T R - I|_max, |det-1|).
double orthonormality_error(const Mat3& R);

/// Camera pose looking from `eye` toward `target` with `up` pointing to
/// image -Y. Returns camera_from_base.
Extrinsic look_at(const Vec3& eye, const Vec3& target, const Vec3& up);

// JSON ({"matrix": [16 row-major], "convention": "..."}).
std::string extrinsic_to_json(const Extrinsic& T);
Extrinsic extrinsic_from_json(const std::string& text,
                              std::string* convention = nullptr);
void save_extrinsic(const std::string& path, const Extrinsic& T);
Extrinsic load_extrinsic(const std::string& path,
                         std::string* convention = nullptr);

}  // namespace calib
