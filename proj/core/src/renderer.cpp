#include "calib/renderer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "calib/error.hpp"

namespace calib {

namespace {

constexpr double kZNear = 1e-6;

struct ScreenVertex {
  double x;
  double y;
  double inv_z;
};

inline double edge(const ScreenVertex& a, const ScreenVertex& b, double px,
                   double py) {
  return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
}

// x of an edge at row py, from endpoints ordered by y. Triangles sharing an
// edge evaluate the same expression on the same operands, so spans meet
// without gaps or double coverage.
struct EdgeX {
  double ax, ay, slope;
  EdgeX(const ScreenVertex& lo, const ScreenVertex& hi)
      : ax(lo.x), ay(lo.y), slope((hi.x - lo.x) / (hi.y - lo.y)) {}
  double at(double py) const { return ax + (py - ay) * slope; }
};

inline bool y_before(const ScreenVertex& p, const ScreenVertex& q) {
  return p.y < q.y || (p.y == q.y && p.x < q.x);
}

inline ScreenVertex to_screen(const Vec3& pc, const Intrinsics& K, int ss) {
  // Pixel i spans u in [i - 0.5, i + 0.5); subsample k of the (ss*W) raster
  // has its center at raster coordinate k + 0.5.
  const double inv_z = 1.0 / pc.z();
  return ScreenVertex{ss * (K.fx * pc.x() * inv_z + K.cx + 0.5),
                      ss * (K.fy * pc.y() * inv_z + K.cy + 0.5), inv_z};
}

inline void check_supersample(int ss) {
  if (ss != 1 && ss != 2 && ss != 4) {
    throw Error(ErrorCode::kInvalidArgument, "supersample must be 1, 2 or 4");
  }
}

struct RasterRange {
  int x0, x1, y0, y1;  // inclusive; empty when x0 > x1 or y0 > y1
};

// ceil(v) clamped to [lo, hi], without a libm call.
inline int ceil_clamped(double v, int lo, int hi) {
  v = std::min(std::max(static_cast<double>(lo), v), static_cast<double>(hi));  // NaN -> lo
  const int i = static_cast<int>(v);
  return i + static_cast<int>(i < v);
}

inline int clamp_to_int(double v, int lo, int hi) {
  if (!(v > lo)) return lo;
  if (!(v < hi)) return hi;
  return static_cast<int>(v);
}

// Visits every subsample whose center lies inside the triangle. Rows cover
// py in [top, bottom) and columns px in [left, right). With kDepth the sink
// gets sink(ix, iy, z) per sample with perspective-correct eye z, otherwise
// sink(iy, x0, x_end) per row span.
template <bool kDepth, class Sink>
RasterRange raster_triangle(ScreenVertex a, ScreenVertex b, ScreenVertex c,
                            int sub_w, int sub_h, Sink&& sink) {
  RasterRange range{sub_w, -1, sub_h, -1};
  double area = edge(a, b, c.x, c.y);
  if (!std::isfinite(area) || area == 0.0) return range;
  if (area < 0.0) {
    std::swap(b, c);
    area = -area;
  }
  ScreenVertex v[3] = {a, b, c};
  if (y_before(v[1], v[0])) std::swap(v[0], v[1]);
  if (y_before(v[2], v[1])) std::swap(v[1], v[2]);
  if (y_before(v[1], v[0])) std::swap(v[0], v[1]);

  const int y0 = ceil_clamped(v[0].y - 0.5, 0, sub_h);
  const int y_end = ceil_clamped(v[2].y - 0.5, 0, sub_h);
  if (y0 >= y_end) return range;

  const EdgeX long_edge(v[0], v[2]);
  // The middle vertex lies right of the long edge when the long edge bounds
  // the span on the left.
  const bool long_left = v[1].x > long_edge.at(v[1].y);
  const int y_mid = ceil_clamped(v[1].y - 0.5, y0, y_end);
  const double inv_area = 1.0 / area;

  auto walk = [&](int row0, int row1, const ScreenVertex& lo, const ScreenVertex& hi) {
    if (row0 >= row1) return;
    const EdgeX short_edge(lo, hi);
    const EdgeX& left = long_left ? long_edge : short_edge;
    const EdgeX& right = long_left ? short_edge : long_edge;
    for (int iy = row0; iy < row1; ++iy) {
      const double py = iy + 0.5;
      const int x0 = ceil_clamped(left.at(py) - 0.5, 0, sub_w);
      const int x_end = ceil_clamped(right.at(py) - 0.5, 0, sub_w);
      if (x0 >= x_end) continue;
      range.x0 = std::min(range.x0, x0);
      range.x1 = std::max(range.x1, x_end - 1);
      range.y0 = std::min(range.y0, iy);
      range.y1 = std::max(range.y1, iy);
      if constexpr (kDepth) {
        for (int ix = x0; ix < x_end; ++ix) {
          const double px = ix + 0.5;
          const double w0 = edge(b, c, px, py);
          const double w1 = edge(c, a, px, py);
          const double w2 = edge(a, b, px, py);
          const double inv_z = (w0 * a.inv_z + w1 * b.inv_z + w2 * c.inv_z) * inv_area;
          sink(ix, iy, 1.0 / inv_z);
        }
      }
      if constexpr (!kDepth) sink(iy, x0, x_end);
    }
  };
  walk(y0, y_mid, v[0], v[1]);
  walk(y_mid, y_end, v[1], v[2]);
  return range;
}

// Near-plane clip of one camera-space triangle, then projection. Calls
// emit(ScreenVertex, ScreenVertex, ScreenVertex) for each resulting piece.
template <class Emit>
void clip_and_project(const Vec3& p0, const Vec3& p1, const Vec3& p2,
                      const Intrinsics& K, int ss, Emit&& emit) {
  const bool f0 = p0.z() > kZNear, f1 = p1.z() > kZNear, f2 = p2.z() > kZNear;
  if (!f0 && !f1 && !f2) return;
  if (f0 && f1 && f2) {
    emit(to_screen(p0, K, ss), to_screen(p1, K, ss), to_screen(p2, K, ss));
    return;
  }
  const Vec3* in[3] = {&p0, &p1, &p2};
  Vec3 poly[4];
  int n = 0;
  for (int i = 0; i < 3; ++i) {
    const Vec3& cur = *in[i];
    const Vec3& nxt = *in[(i + 1) % 3];
    const bool cf = cur.z() > kZNear;
    const bool nf = nxt.z() > kZNear;
    if (cf) poly[n++] = cur;
    if (cf != nf) {
      const double s = (kZNear - cur.z()) / (nxt.z() - cur.z());
      Vec3 hit = cur + s * (nxt - cur);
      hit.z() = kZNear * (1.0 + 1e-9);
      poly[n++] = hit;
    }
  }
  const ScreenVertex s0 = to_screen(poly[0], K, ss);
  for (int k = 1; k + 1 < n; ++k) {
    emit(s0, to_screen(poly[k], K, ss), to_screen(poly[k + 1], K, ss));
  }
}

// Sign of the enclosed volume if every directed edge is matched by exactly
// one opposite edge, else 0.
std::int8_t closed_orientation(const TriangleMesh& m) {
  std::map<std::pair<int, int>, int> edges;
  for (const auto& t : m.triangles) {
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) return 0;
    for (int k = 0; k < 3; ++k) {
      if (++edges[{t[k], t[(k + 1) % 3]}] > 1) return 0;
    }
  }
  for (const auto& [e, n] : edges) {
    if (!edges.count({e.second, e.first})) return 0;
  }
  double volume = 0.0;
  for (const auto& t : m.triangles) {
    volume += m.vertices[t[0]].dot(m.vertices[t[1]].cross(m.vertices[t[2]]));
  }
  if (volume > 0.0) return 1;
  if (volume < 0.0) return -1;
  return 0;
}

// Camera-space test; the camera sits at the origin.
inline bool faces_away(const Vec3& p0, const Vec3& p1, const Vec3& p2, std::int8_t facing) {
  if (facing == 0) return false;
  return facing * (p1 - p0).cross(p2 - p0).dot(p0) >= 0.0;
}

void transform_all(const RenderScene& scene, const Extrinsic& T,
                   std::vector<Vec3>& out) {
  out.resize(scene.vertices.size());
  const Mat3& R = T.rotation();
  const Vec3& t = T.translation();
  for (size_t i = 0; i < scene.vertices.size(); ++i) {
    out[i] = R * scene.vertices[i] + t;
  }
}

}  // namespace

RenderScene RenderScene::from_meshes(const std::vector<TriangleMesh>& meshes) {
  RenderScene scene;
  for (size_t link = 0; link < meshes.size(); ++link) {
    const int base = static_cast<int>(scene.vertices.size());
    const TriangleMesh& m = meshes[link];
    const std::int8_t facing = closed_orientation(m);
    scene.vertices.insert(scene.vertices.end(), m.vertices.begin(), m.vertices.end());
    for (const auto& t : m.triangles) {
      scene.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
      scene.triangle_link.push_back(static_cast<int>(link));
      scene.triangle_facing.push_back(facing);
    }
  }
  return scene;
}

RenderScene RenderScene::from_robot(const RobotModel& model, const JointState& q) {
  return from_meshes(posed_meshes(model, q));
}

RenderScene RenderScene::only_link(int link) const {
  RenderScene out;
  out.vertices = vertices;
  for (size_t i = 0; i < triangles.size(); ++i) {
    if (triangle_link[i] == link) {
      out.triangles.push_back(triangles[i]);
      out.triangle_link.push_back(link);
      out.triangle_facing.push_back(facing(i));
    }
  }
  return out;
}

RenderBundle render(const RobotModel& model, const JointState& q,
                    const Extrinsic& T, const Intrinsics& K, int ss) {
  return render_scene(RenderScene::from_robot(model, q), T, K, ss);
}

RenderBundle render_scene(const RenderScene& scene, const Extrinsic& T,
                          const Intrinsics& K, int ss) {
  check_supersample(ss);
  K.validate();
  const int W = K.width, H = K.height;
  const int sub_w = W * ss, sub_h = H * ss;
  const int rep = ss / 2;

  std::vector<std::uint8_t> covered(static_cast<size_t>(sub_w) * sub_h, 0);
  std::vector<double> zbuf(static_cast<size_t>(W) * H,
                           std::numeric_limits<double>::infinity());
  RenderBundle out;
  out.link_id = ImageI32(W, H, -1);

  std::vector<Vec3> cam;
  transform_all(scene, T, cam);
  for (size_t t = 0; t < scene.triangles.size(); ++t) {
    const auto& tri = scene.triangles[t];
    if (faces_away(cam[tri[0]], cam[tri[1]], cam[tri[2]], scene.facing(t))) continue;
    const int link = scene.triangle_link[t];
    auto sink = [&](int ix, int iy, double z) {
      covered[static_cast<size_t>(iy) * sub_w + ix] = 1;
      if (ix % ss == rep && iy % ss == rep) {
        const size_t p = static_cast<size_t>(iy / ss) * W + ix / ss;
        // Strict: earlier (lower link, lower triangle) wins ties.
        if (z < zbuf[p]) {
          zbuf[p] = z;
          out.link_id.data[p] = link;
        }
      }
    };
    clip_and_project(cam[tri[0]], cam[tri[1]], cam[tri[2]], K, ss,
                     [&](const ScreenVertex& a, const ScreenVertex& b,
                         const ScreenVertex& c) {
                       raster_triangle<true>(a, b, c, sub_w, sub_h, sink);
                     });
  }

  out.coverage = ImageF(W, H, 0.0f);
  out.depth = ImageF(W, H, std::numeric_limits<float>::infinity());
  const float norm = 1.0f / static_cast<float>(ss * ss);
  out.empty = true;
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      int count = 0;
      for (int sy = 0; sy < ss; ++sy) {
        const std::uint8_t* row = &covered[static_cast<size_t>(y * ss + sy) * sub_w + x * ss];
        for (int sx = 0; sx < ss; ++sx) count += row[sx];
      }
      const size_t p = static_cast<size_t>(y) * W + x;
      out.coverage.data[p] = static_cast<float>(count) * norm;
      if (count) out.empty = false;
      if (out.link_id.data[p] >= 0) out.depth.data[p] = static_cast<float>(zbuf[p]);
    }
  }
  return out;
}

CoverageRasterizer::CoverageRasterizer(const Intrinsics& K, int ss)
    : K_(K), ss_(ss), sub_w_(K.width * ss), sub_h_(K.height * ss) {
  check_supersample(ss);
  K.validate();
  sub_.assign(static_cast<size_t>(sub_w_) * sub_h_, 0);
}

std::int64_t CoverageRasterizer::rasterize(const RenderScene& scene,
                                           const Extrinsic& T) {
  for (int y = y0_; y < y1_; ++y) {
    std::fill_n(&sub_[static_cast<size_t>(y) * sub_w_ + x0_], x1_ - x0_, 0);
  }
  x0_ = sub_w_;
  y0_ = sub_h_;
  x1_ = y1_ = 0;

  transform_all(scene, T, cam_);
  std::int64_t count = 0;
  auto sink = [&](int iy, int x0, int x_end) {
    std::uint8_t* row = &sub_[static_cast<size_t>(iy) * sub_w_ + x0];
    for (int i = 0; i < x_end - x0; ++i) {
      count += row[i] ^ 1;
      row[i] = 1;
    }
  };
  for (size_t t = 0; t < scene.triangles.size(); ++t) {
    const auto& tri = scene.triangles[t];
    if (faces_away(cam_[tri[0]], cam_[tri[1]], cam_[tri[2]], scene.facing(t))) continue;
    clip_and_project(cam_[tri[0]], cam_[tri[1]], cam_[tri[2]], K_, ss_,
                     [&](const ScreenVertex& a, const ScreenVertex& b,
                         const ScreenVertex& c) {
                       const RasterRange r =
                           raster_triangle<false>(a, b, c, sub_w_, sub_h_, sink);
                       if (r.x0 <= r.x1 && r.y0 <= r.y1) {
                         x0_ = std::min(x0_, r.x0);
                         x1_ = std::max(x1_, r.x1 + 1);
                         y0_ = std::min(y0_, r.y0);
                         y1_ = std::max(y1_, r.y1 + 1);
                       }
                     });
  }
  if (x0_ >= x1_ || y0_ >= y1_) x0_ = x1_ = y0_ = y1_ = 0;
  return count;
}

ImageF CoverageRasterizer::coverage() const {
  const int W = K_.width, H = K_.height;
  ImageF out(W, H, 0.0f);
  const float norm = 1.0f / static_cast<float>(ss_ * ss_);
  for (int y = y0_ / ss_; y < (y1_ + ss_ - 1) / ss_; ++y) {
    for (int x = x0_ / ss_; x < (x1_ + ss_ - 1) / ss_; ++x) {
      int count = 0;
      for (int sy = 0; sy < ss_; ++sy) {
        const std::uint8_t* row = &sub_[static_cast<size_t>(y * ss_ + sy) * sub_w_ + x * ss_];
        for (int sx = 0; sx < ss_; ++sx) count += row[sx];
      }
      out.at(x, y) = static_cast<float>(count) * norm;
    }
  }
  return out;
}

double CoverageRasterizer::squared_error(const ImageF& target,
                                         double target_sq_sum) const {
  if (target.width != K_.width || target.height != K_.height) {
    throw Error(ErrorCode::kShapeMismatch, "target mask size differs from intrinsics");
  }
  const float norm = 1.0f / static_cast<float>(ss_ * ss_);
  double delta = 0.0;
  for (int y = y0_ / ss_; y < (y1_ + ss_ - 1) / ss_; ++y) {
    for (int x = x0_ / ss_; x < (x1_ + ss_ - 1) / ss_; ++x) {
      int count = 0;
      for (int sy = 0; sy < ss_; ++sy) {
        const std::uint8_t* row = &sub_[static_cast<size_t>(y * ss_ + sy) * sub_w_ + x * ss_];
        for (int sx = 0; sx < ss_; ++sx) count += row[sx];
      }
      if (count == 0) continue;
      const double t = target.at(x, y);
      const double d = t - static_cast<double>(static_cast<float>(count) * norm);
      delta += d * d - t * t;
    }
  }
  return target_sq_sum + delta;
}

std::vector<TrajectoryPoint> project_trajectory(const std::vector<Vec3>& points,
                                                const Extrinsic& T,
                                                const Intrinsics& K) {
  std::vector<TrajectoryPoint> out;
  out.reserve(points.size());
  for (const Vec3& p : points) {
    const Vec3 pc = transform_point(T, p);
    TrajectoryPoint tp;
    if (pc.z() <= kDefaultZMin) {
      tp.px = Vec2(-1.0, -1.0);
      tp.visible = false;
    } else {
      tp.px = project(K, pc);
      tp.visible = tp.px.x() >= 0.0 && tp.px.x() < K.width &&
                   tp.px.y() >= 0.0 && tp.px.y() < K.height;
    }
    out.push_back(tp);
  }
  return out;
}

ImageU8 link_id_to_png(const ImageI32& link_id) {
  ImageU8 out(link_id.width, link_id.height, kLinkIdBackground);
  for (size_t i = 0; i < link_id.data.size(); ++i) {
    const int v = link_id.data[i];
    if (v >= 0) {
      if (v >= kLinkIdBackground) {
        throw Error(ErrorCode::kOutOfBounds, "link index does not fit the link-ID PNG");
      }
      out.data[i] = static_cast<std::uint8_t>(v);
    }
  }
  return out;
}

}  // namespace calib
