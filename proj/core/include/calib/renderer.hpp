#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "calib/image.hpp"
#include "calib/kinematics.hpp"
#include "calib/se3.hpp"

namespace calib {

inline constexpr int kDefaultSupersample = 4;
inline constexpr std::uint8_t kLinkIdBackground = 255;

/// Output of a full render. `depth` is eye-space z in meters (+Inf on
/// background) and `link_id` is -1 on background; both come from the
/// subsample at index (ss/2, ss/2) of each pixel, so link_id >= 0 exactly
/// where that subsample is covered.
struct RenderBundle {
  ImageF coverage;
  ImageF depth;
  ImageI32 link_id;
  /// Coverage identically zero. Refinement treats this as the collapsed,
  /// zero-gradient case.
  bool empty = true;
};

/// Posed triangles flattened for repeated rendering of one joint state.
struct RenderScene {
  std::vector<Vec3> vertices;  // base frame
  std::vector<std::array<int, 3>> triangles;
  std::vector<int> triangle_link;
  // +1 or -1 when the triangle's mesh is closed with consistent winding (the
  // sign of its enclosed volume); such triangles are skipped when they face
  // away from the camera. 0 draws the triangle from both sides.
  std::vector<std::int8_t> triangle_facing;

  static RenderScene from_meshes(const std::vector<TriangleMesh>& meshes);
  static RenderScene from_robot(const RobotModel& model, const JointState& q);
  /// Only the triangles belonging to `link`.
  RenderScene only_link(int link) const;
  size_t triangle_count() const { return triangles.size(); }
  std::int8_t facing(size_t t) const {
    return t < triangle_facing.size() ? triangle_facing[t] : std::int8_t{0};
  }
};

/// Z-buffered rasterization at (ss*H) x (ss*W), box-filtered to fractional
/// coverage. Triangles entirely at z <= 1e-6 m are culled; straddling ones
/// are clipped to the near plane. Back faces of closed meshes are skipped,
/// which leaves the output unchanged while the camera is outside them. z ties
/// go to the lower link index, then lower triangle index.
RenderBundle render(const RobotModel& model, const JointState& q,
                    const Extrinsic& T, const Intrinsics& K,
                    int ss = kDefaultSupersample);
RenderBundle render_scene(const RenderScene& scene, const Extrinsic& T,
                          const Intrinsics& K, int ss = kDefaultSupersample);

/// Coverage-only renderer with reusable buffers. Produces exactly the
/// coverage of render_scene() but skips depth, and only touches the
/// bounding box of what was drawn.
class CoverageRasterizer {
 public:
  CoverageRasterizer(const Intrinsics& K, int ss);

  /// Returns the number of covered subsamples.
  std::int64_t rasterize(const RenderScene& scene, const Extrinsic& T);

  ImageF coverage() const;
  /// sum over all pixels of (target - coverage)^2. `target_sq_sum` must be
  /// sum(target^2).
  double squared_error(const ImageF& target, double target_sq_sum) const;

  const Intrinsics& intrinsics() const { return K_; }
  int supersample() const { return ss_; }

 private:
  Intrinsics K_;
  int ss_;
  int sub_w_;
  int sub_h_;
  std::vector<std::uint8_t> sub_;
  // Bounding box of set subsamples, [x0, x1) x [y0, y1).
  int x0_ = 0, x1_ = 0, y0_ = 0, y1_ = 0;
  std::vector<Vec3> cam_;  // scratch
};

struct TrajectoryPoint {
  Vec2 px = Vec2::Zero();
  bool visible = false;
};

/// visible=false when the point is behind the camera (z <= 1e-6) or projects
/// outside [0, width) x [0, height). Behind-camera points report (-1, -1).
std::vector<TrajectoryPoint> project_trajectory(const std::vector<Vec3>& points,
                                                const Extrinsic& T,
                                                const Intrinsics& K);

/// Link-ID raster as written to PNG: background 255, link i as i.
ImageU8 link_id_to_png(const ImageI32& link_id);

}  // namespace calib
