// EPnP closed-form PnP (four virtual control points) with a homography
// branch for planar point sets.

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>

#include "calib/error.hpp"
#include "calib/temporal_pnp.hpp"

namespace calib {

namespace {

constexpr double kCollinearRatio = 1e-10;
constexpr double kPlanarRatio = 1e-3;
constexpr double kFlatRatio = 1e-12;

struct Candidate {
  Extrinsic pose;
  double sse;
};

using Vec4 = Eigen::Vector4d;
using Mat12 = Eigen::Matrix<double, 12, 12>;
using L6x10 = Eigen::Matrix<double, 6, 10>;
using Vec6r = Eigen::Matrix<double, 6, 1>;

bool all_in_front(const Correspondences& c, const Extrinsic& T) {
  for (const auto& p : c) {
    if (transform_point(T, p.p3d).z() <= kDefaultZMin) return false;
  }
  return true;
}

// Rigid fit camera = R * world + t (Kabsch).
std::optional<Extrinsic> fit_rigid(const std::vector<Vec3>& world,
                                   const std::vector<Vec3>& cam) {
  const size_t n = world.size();
  Vec3 cw = Vec3::Zero(), cc = Vec3::Zero();
  for (size_t i = 0; i < n; ++i) {
    cw += world[i];
    cc += cam[i];
  }
  cw /= n;
  cc /= n;
  Mat3 H = Mat3::Zero();
  for (size_t i = 0; i < n; ++i) H += (cam[i] - cc) * (world[i] - cw).transpose();
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) D(2, 2) = -1;
  const Mat3 R = svd.matrixU() * D * svd.matrixV().transpose();
  const Vec3 t = cc - R * cw;
  if (!R.allFinite() || !t.allFinite()) return std::nullopt;
  return Extrinsic(R, t, 1e-6);
}

class Epnp {
 public:
  Epnp(const Correspondences& c, const Intrinsics& K) : c_(c), K_(K) {}

  std::vector<Candidate> solve() {
    choose_control_points();
    if (!barycentric()) return {};
    const Eigen::MatrixXd M = build_m();
    const Mat12 MtM = M.transpose() * M;
    Eigen::SelfAdjointEigenSolver<Mat12> eig(MtM);
    // Eigenvalues ascending: column 0 spans the most likely null space.
    const Mat12 V = eig.eigenvectors();
    const L6x10 L = build_l(V);
    const Vec6r rho = build_rho();

    std::vector<Candidate> out;
    for (int variant = 1; variant <= 3; ++variant) {
      Vec4 betas = Vec4::Zero();
      if (variant == 1) betas_approx1(L, rho, betas);
      if (variant == 2) betas_approx2(L, rho, betas);
      if (variant == 3) betas_approx3(L, rho, betas);
      gauss_newton(L, rho, betas);
      if (auto cand = pose_from_betas(V, betas)) out.push_back(*cand);
    }
    return out;
  }

 private:
  void choose_control_points() {
    const size_t n = c_.size();
    cws_[0] = Vec3::Zero();
    for (const auto& p : c_) cws_[0] += p.p3d;
    cws_[0] /= static_cast<double>(n);
    Mat3 cov = Mat3::Zero();
    for (const auto& p : c_) {
      const Vec3 d = p.p3d - cws_[0];
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    for (int i = 1; i < 4; ++i) {
      const int k = 3 - i;  // descending
      const double s = std::sqrt(std::max(eig.eigenvalues()(k), 0.0) / n);
      cws_[i] = cws_[0] + s * eig.eigenvectors().col(k);
    }
  }

  bool barycentric() {
    Mat3 CC;
    for (int j = 0; j < 3; ++j) CC.col(j) = cws_[j + 1] - cws_[0];
    Eigen::FullPivLU<Mat3> lu(CC);
    if (!lu.isInvertible()) return false;
    const Mat3 inv = lu.inverse();
    alphas_.resize(c_.size());
    for (size_t i = 0; i < c_.size(); ++i) {
      const Vec3 a = inv * (c_[i].p3d - cws_[0]);
      alphas_[i] = Vec4(1.0 - a.sum(), a(0), a(1), a(2));
    }
    return true;
  }

  Eigen::MatrixXd build_m() const {
    Eigen::MatrixXd M(2 * c_.size(), 12);
    for (size_t i = 0; i < c_.size(); ++i) {
      const double x = (c_[i].p2d.x() - K_.cx) / K_.fx;
      const double y = (c_[i].p2d.y() - K_.cy) / K_.fy;
      for (int j = 0; j < 4; ++j) {
        const double a = alphas_[i](j);
        M(2 * i, 3 * j) = a;
        M(2 * i, 3 * j + 1) = 0.0;
        M(2 * i, 3 * j + 2) = -a * x;
        M(2 * i + 1, 3 * j) = 0.0;
        M(2 * i + 1, 3 * j + 1) = a;
        M(2 * i + 1, 3 * j + 2) = -a * y;
      }
    }
    return M;
  }

  static L6x10 build_l(const Mat12& V) {
    // dv[k][pair]: difference of control points a,b within null vector k.
    std::array<std::array<Vec3, 6>, 4> dv;
    for (int k = 0; k < 4; ++k) {
      int a = 0, b = 1;
      for (int p = 0; p < 6; ++p) {
        dv[k][p] = V.col(k).segment<3>(3 * a) - V.col(k).segment<3>(3 * b);
        if (++b > 3) {
          ++a;
          b = a + 1;
        }
      }
    }
    L6x10 L;
    for (int p = 0; p < 6; ++p) {
      L(p, 0) = dv[0][p].dot(dv[0][p]);
      L(p, 1) = 2.0 * dv[0][p].dot(dv[1][p]);
      L(p, 2) = dv[1][p].dot(dv[1][p]);
      L(p, 3) = 2.0 * dv[0][p].dot(dv[2][p]);
      L(p, 4) = 2.0 * dv[1][p].dot(dv[2][p]);
      L(p, 5) = dv[2][p].dot(dv[2][p]);
      L(p, 6) = 2.0 * dv[0][p].dot(dv[3][p]);
      L(p, 7) = 2.0 * dv[1][p].dot(dv[3][p]);
      L(p, 8) = 2.0 * dv[2][p].dot(dv[3][p]);
      L(p, 9) = dv[3][p].dot(dv[3][p]);
    }
    return L;
  }

  Vec6r build_rho() const {
    Vec6r rho;
    int p = 0;
    for (int a = 0; a < 4; ++a)
      for (int b = a + 1; b < 4; ++b) rho(p++) = (cws_[a] - cws_[b]).squaredNorm();
    return rho;
  }

  // betas10 = [B11 B12 B22 B13 B23 B33 B14 B24 B34 B44]
  static void betas_approx1(const L6x10& L, const Vec6r& rho, Vec4& betas) {
    Eigen::Matrix<double, 6, 4> A;
    A << L.col(0), L.col(1), L.col(3), L.col(6);
    const Vec4 b4 = A.jacobiSvd(Eigen::ComputeFullU | Eigen::ComputeFullV).solve(rho);
    const double s = b4(0) < 0 ? -1.0 : 1.0;
    betas(0) = std::sqrt(s * b4(0));
    betas(1) = s * b4(1) / betas(0);
    betas(2) = s * b4(2) / betas(0);
    betas(3) = s * b4(3) / betas(0);
  }

  static void betas_approx2(const L6x10& L, const Vec6r& rho, Vec4& betas) {
    const Eigen::Matrix<double, 6, 3> A = L.leftCols<3>();
    const Vec3 b3 = A.jacobiSvd(Eigen::ComputeFullU | Eigen::ComputeFullV).solve(rho);
    if (b3(0) < 0) {
      betas(0) = std::sqrt(-b3(0));
      betas(1) = b3(2) < 0 ? std::sqrt(-b3(2)) : 0.0;
    } else {
      betas(0) = std::sqrt(b3(0));
      betas(1) = b3(2) > 0 ? std::sqrt(b3(2)) : 0.0;
    }
    if (b3(1) < 0) betas(0) = -betas(0);
    betas(2) = betas(3) = 0.0;
  }

  static void betas_approx3(const L6x10& L, const Vec6r& rho, Vec4& betas) {
    const Eigen::Matrix<double, 6, 5> A = L.leftCols<5>();
    const Eigen::Matrix<double, 5, 1> b5 =
        A.jacobiSvd(Eigen::ComputeFullU | Eigen::ComputeFullV).solve(rho);
    if (b5(0) < 0) {
      betas(0) = std::sqrt(-b5(0));
      betas(1) = b5(2) < 0 ? std::sqrt(-b5(2)) : 0.0;
    } else {
      betas(0) = std::sqrt(b5(0));
      betas(1) = b5(2) > 0 ? std::sqrt(b5(2)) : 0.0;
    }
    if (b5(1) < 0) betas(0) = -betas(0);
    betas(2) = betas(0) != 0.0 ? b5(3) / betas(0) : 0.0;
    betas(3) = 0.0;
  }

  static void gauss_newton(const L6x10& L, const Vec6r& rho, Vec4& b) {
    for (int iter = 0; iter < 5; ++iter) {
      Eigen::Matrix<double, 6, 4> A;
      Vec6r r;
      for (int i = 0; i < 6; ++i) {
        A(i, 0) = 2 * L(i, 0) * b(0) + L(i, 1) * b(1) + L(i, 3) * b(2) + L(i, 6) * b(3);
        A(i, 1) = L(i, 1) * b(0) + 2 * L(i, 2) * b(1) + L(i, 4) * b(2) + L(i, 7) * b(3);
        A(i, 2) = L(i, 3) * b(0) + L(i, 4) * b(1) + 2 * L(i, 5) * b(2) + L(i, 8) * b(3);
        A(i, 3) = L(i, 6) * b(0) + L(i, 7) * b(1) + L(i, 8) * b(2) + 2 * L(i, 9) * b(3);
        r(i) = rho(i) - (L(i, 0) * b(0) * b(0) + L(i, 1) * b(0) * b(1) +
                         L(i, 2) * b(1) * b(1) + L(i, 3) * b(0) * b(2) +
                         L(i, 4) * b(1) * b(2) + L(i, 5) * b(2) * b(2) +
                         L(i, 6) * b(0) * b(3) + L(i, 7) * b(1) * b(3) +
                         L(i, 8) * b(2) * b(3) + L(i, 9) * b(3) * b(3));
      }
      const Vec4 step = A.colPivHouseholderQr().solve(r);
      if (!step.allFinite()) return;
      b += step;
    }
  }

  std::optional<Candidate> pose_from_betas(const Mat12& V, const Vec4& betas) const {
    std::array<Vec3, 4> ccs;
    for (int j = 0; j < 4; ++j) {
      ccs[j] = Vec3::Zero();
      for (int k = 0; k < 4; ++k) ccs[j] += betas(k) * V.col(k).segment<3>(3 * j);
    }
    std::vector<Vec3> pcs(c_.size()), pws(c_.size());
    for (size_t i = 0; i < c_.size(); ++i) {
      pcs[i] = Vec3::Zero();
      for (int j = 0; j < 4; ++j) pcs[i] += alphas_[i](j) * ccs[j];
      pws[i] = c_[i].p3d;
    }
    // The null-space solution is defined up to sign; pick positive depth.
    if (pcs[0].z() < 0) {
      for (auto& p : pcs) p = -p;
    }
    auto pose = fit_rigid(pws, pcs);
    if (!pose) return std::nullopt;
    return Candidate{*pose, reprojection_sse(c_, K_, *pose)};
  }

  const Correspondences& c_;
  const Intrinsics& K_;
  std::array<Vec3, 4> cws_;
  std::vector<Vec4> alphas_;
};

// Planar points: DLT homography from in-plane coordinates to normalized image
// coordinates, decomposed into rotation and translation. Returns both signs
// of the plane normal's ambiguity that survive cheirality.
std::vector<Candidate> solve_planar(const Correspondences& c, const Intrinsics& K,
                                    const Vec3& centroid, const Mat3& basis) {
  const size_t n = c.size();
  // Hartley normalization of both sides.
  std::vector<Vec2> src(n), dst(n);
  for (size_t i = 0; i < n; ++i) {
    const Vec3 d = basis.transpose() * (c[i].p3d - centroid);
    src[i] = d.head<2>();
    dst[i] = Vec2((c[i].p2d.x() - K.cx) / K.fx, (c[i].p2d.y() - K.cy) / K.fy);
  }
  auto normalizer = [](const std::vector<Vec2>& pts) {
    Vec2 mean = Vec2::Zero();
    for (const auto& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    double spread = 0.0;
    for (const auto& p : pts) spread += (p - mean).norm();
    spread /= static_cast<double>(pts.size());
    const double s = spread > 0 ? std::sqrt(2.0) / spread : 1.0;
    Mat3 N;
    N << s, 0, -s * mean.x(), 0, s, -s * mean.y(), 0, 0, 1;
    return N;
  };
  const Mat3 Ns = normalizer(src), Nd = normalizer(dst);
  Eigen::MatrixXd A(2 * n, 9);
  for (size_t i = 0; i < n; ++i) {
    const Vec3 s = Ns * src[i].homogeneous();
    const Vec3 d = Nd * dst[i].homogeneous();
    A.row(2 * i) << 0, 0, 0, -s.transpose(), d.y() * s.transpose();
    A.row(2 * i + 1) << s.transpose(), 0, 0, 0, -d.x() * s.transpose();
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> h = svd.matrixV().col(8);
  Mat3 Hn;
  Hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);
  const Mat3 H = Nd.inverse() * Hn * Ns;

  std::vector<Candidate> out;
  for (double sign : {1.0, -1.0}) {
    const double scale = sign * 2.0 / (H.col(0).norm() + H.col(1).norm());
    const Vec3 r1 = scale * H.col(0);
    const Vec3 r2 = scale * H.col(1);
    const Vec3 t = scale * H.col(2);
    Mat3 Rp;
    Rp << r1, r2, r1.cross(r2);
    Eigen::JacobiSVD<Mat3> rs(Rp, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 D = Mat3::Identity();
    if ((rs.matrixU() * rs.matrixV().transpose()).determinant() < 0) D(2, 2) = -1;
    const Mat3 R_cam_plane = rs.matrixU() * D * rs.matrixV().transpose();
    // plane_from_base: rows of `basis`, origin at the centroid.
    const Mat3 R = R_cam_plane * basis.transpose();
    const Vec3 tt = t - R * centroid;
    if (!R.allFinite() || !tt.allFinite()) continue;
    Extrinsic pose(R, tt, 1e-6);
    out.push_back(Candidate{pose, reprojection_sse(c, K, pose)});
  }
  return out;
}

}  // namespace

double reprojection_sse(const Correspondences& c, const Intrinsics& K,
                        const Extrinsic& T) {
  double sse = 0.0;
  for (const auto& p : c) {
    const Vec3 pc = transform_point(T, p.p3d);
    if (pc.z() <= kDefaultZMin) {
      sse += 1e12;
      continue;
    }
    sse += (project(K, pc) - p.p2d).squaredNorm();
  }
  return sse;
}

std::vector<double> reprojection_errors(const Correspondences& c,
                                        const Intrinsics& K,
                                        const Extrinsic& T) {
  std::vector<double> out;
  out.reserve(c.size());
  for (const auto& p : c) {
    const Vec3 pc = transform_point(T, p.p3d);
    out.push_back(pc.z() <= kDefaultZMin
                      ? std::numeric_limits<double>::infinity()
                      : (project(K, pc) - p.p2d).norm());
  }
  return out;
}

Extrinsic solve_epnp(const Correspondences& c, const Intrinsics& K) {
  if (static_cast<int>(c.size()) < kMinCorrespondences) {
    throw Error(ErrorCode::kTooFewVisible,
                "PnP needs at least " + std::to_string(kMinCorrespondences) +
                    " correspondences");
  }
  Vec3 centroid = Vec3::Zero();
  for (const auto& p : c) centroid += p.p3d;
  centroid /= static_cast<double>(c.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : c) {
    const Vec3 d = p.p3d - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 ev = eig.eigenvalues();  // ascending
  if (!(ev(2) > kFlatRatio * std::max(1.0, centroid.squaredNorm())) ||
      ev(1) < kCollinearRatio * ev(2)) {
    throw Error(ErrorCode::kDegenerateGeometry,
                "3D points are coincident or collinear");
  }

  std::vector<Candidate> candidates;
  if (ev(0) >= kPlanarRatio * kPlanarRatio * ev(2)) {
    candidates = Epnp(c, K).solve();
  }
  if (ev(0) < kPlanarRatio * ev(2)) {
    Mat3 basis;
    basis << eig.eigenvectors().col(2), eig.eigenvectors().col(1),
        eig.eigenvectors().col(2).cross(eig.eigenvectors().col(1));
    auto planar = solve_planar(c, K, centroid, basis);
    candidates.insert(candidates.end(), planar.begin(), planar.end());
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) { return a.sse < b.sse; });
  for (const Candidate& cand : candidates) {
    if (std::isfinite(cand.sse) && all_in_front(c, cand.pose)) return cand.pose;
  }
  throw Error(ErrorCode::kSolverFailure, "no finite PnP candidate in front of the camera");
}

Extrinsic solve_pnp(const Correspondences& c, const Intrinsics& K) {
  Extrinsic pose = solve_epnp(c, K);
  double cost = reprojection_sse(c, K, pose);
  double lambda = 1e-3;
  for (int iter = 0; iter < 100; ++iter) {
    Eigen::Matrix<double, 6, 6> JtJ = Eigen::Matrix<double, 6, 6>::Zero();
    Vec6 Jtr = Vec6::Zero();
    for (const auto& p : c) {
      const Vec3 q = pose.rotation() * p.p3d;
      const Vec3 pc = q + pose.translation();
      const double iz = 1.0 / pc.z();
      const Vec2 r = Vec2(K.fx * pc.x() * iz + K.cx, K.fy * pc.y() * iz + K.cy) - p.p2d;
      Eigen::Matrix<double, 2, 3> dproj;
      dproj << K.fx * iz, 0, -K.fx * pc.x() * iz * iz,
               0, K.fy * iz, -K.fy * pc.y() * iz * iz;
      Mat3 qx;
      qx << 0, -q.z(), q.y(), q.z(), 0, -q.x(), -q.y(), q.x(), 0;
      Eigen::Matrix<double, 2, 6> J;
      J.leftCols<3>() = -dproj * qx;
      J.rightCols<3>() = dproj;
      JtJ += J.transpose() * J;
      Jtr += J.transpose() * r;
    }
    bool improved = false;
    for (int attempt = 0; attempt < 10 && !improved; ++attempt) {
      Eigen::Matrix<double, 6, 6> A = JtJ;
      A.diagonal() *= 1.0 + lambda;
      const Vec6 delta = A.ldlt().solve(-Jtr);
      if (!delta.allFinite()) break;
      const Extrinsic cand = retract(pose, PoseTangent::from_vector(delta));
      const double cc = reprojection_sse(c, K, cand);
      if (cc < cost) {
        const double gain = cost - cc;
        pose = cand;
        improved = true;
        lambda = std::max(lambda * 0.3, 1e-12);
        if (gain <= 1e-15 * std::max(cost, 1e-300) || delta.norm() < 1e-15) {
          cost = cc;
          iter = 100;  // converged
          break;
        }
        cost = cc;
      } else {
        lambda *= 10.0;
      }
    }
    if (!improved) break;
  }
  // Re-project onto SO(3) to keep the invariant tight after many updates.
  pose = Extrinsic::from_matrix(pose.matrix(), true);
  return pose;
}

}  // namespace calib
