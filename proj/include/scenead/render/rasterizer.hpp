#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "scenead/data/image.hpp"
#include "scenead/geometry/pose.hpp"
#include "scenead/render/scene.hpp"

namespace scenead::render {

using Eigen::Vector2d;
using Eigen::Vector3d;

struct RenderOptions {
  double near = 0.05;
};

struct Face {
  std::array<Vector3d, 4> corners;  // counter-clockwise seen from outside
  Vector3d normal;
};

// Six faces of an axis-aligned box, outward normals.
inline std::array<Face, 6> cuboid_faces(const Cuboid& c) {
  const Vector3d l = c.lo(), h = c.hi();
  auto v = [&](int x, int y, int z) { return Vector3d(x ? h.x() : l.x(), y ? h.y() : l.y(), z ? h.z() : l.z()); };
  return {Face{{v(0, 0, 1), v(1, 0, 1), v(1, 1, 1), v(0, 1, 1)}, Vector3d::UnitZ()},
          Face{{v(0, 0, 0), v(0, 1, 0), v(1, 1, 0), v(1, 0, 0)}, -Vector3d::UnitZ()},
          Face{{v(1, 0, 0), v(1, 1, 0), v(1, 1, 1), v(1, 0, 1)}, Vector3d::UnitX()},
          Face{{v(0, 0, 0), v(0, 0, 1), v(0, 1, 1), v(0, 1, 0)}, -Vector3d::UnitX()},
          Face{{v(0, 1, 0), v(0, 1, 1), v(1, 1, 1), v(1, 1, 0)}, Vector3d::UnitY()},
          Face{{v(0, 0, 0), v(1, 0, 0), v(1, 0, 1), v(0, 0, 1)}, -Vector3d::UnitY()}};
}

inline std::array<Vector3d, 8> cuboid_corners(const Cuboid& c) {
  std::array<Vector3d, 8> out;
  for (int i = 0; i < 8; ++i)
    out[i] = Vector3d(i & 1 ? c.hi().x() : c.lo().x(), i & 2 ? c.hi().y() : c.lo().y(), i & 4 ? c.hi().z() : c.lo().z());
  return out;
}

inline Vector3d shade(const ProceduralScene& s, const Vector3d& albedo, const Vector3d& normal) {
  const double lambert = std::max(0.0, normal.dot(s.light_dir.normalized()));
  return albedo * (s.ambient + (1.0 - s.ambient) * lambert);
}

// Distance from a point to an axis-aligned box (0 inside).
inline double box_distance(const Cuboid& c, const Vector3d& p) {
  const Vector3d d = (c.lo() - p).cwiseMax(p - c.hi()).cwiseMax(Vector3d::Zero());
  return d.norm();
}

namespace detail {

// Keeps the part of a camera-space polygon with z >= near.
inline std::vector<Vector3d> clip_near(const std::vector<Vector3d>& poly, double near) {
  std::vector<Vector3d> out;
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Vector3d& a = poly[i];
    const Vector3d& b = poly[(i + 1) % n];
    const bool ain = a.z() >= near, bin = b.z() >= near;
    if (ain) out.push_back(a);
    if (ain != bin) {
      const double t = (near - a.z()) / (b.z() - a.z());
      out.push_back(a + t * (b - a));
    }
  }
  return out;
}

// Fills pixels whose centres fall inside the convex polygon (either winding).
inline void fill_convex(const std::vector<Vector2d>& pts, const Vector3d& color, int w, int h, std::vector<float>& rgb) {
  if (pts.size() < 3) return;
  double area = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& a = pts[i];
    const auto& b = pts[(i + 1) % pts.size()];
    area += a.x() * b.y() - b.x() * a.y();
  }
  if (area == 0) return;
  const double sgn = area > 0 ? 1.0 : -1.0;
  double minx = pts[0].x(), maxx = minx, miny = pts[0].y(), maxy = miny;
  for (const auto& p : pts) {
    minx = std::min(minx, p.x());
    maxx = std::max(maxx, p.x());
    miny = std::min(miny, p.y());
    maxy = std::max(maxy, p.y());
  }
  const int x0 = std::max(0, static_cast<int>(std::floor(minx - 0.5))), x1 = std::min(w - 1, static_cast<int>(std::ceil(maxx)));
  const int y0 = std::max(0, static_cast<int>(std::floor(miny - 0.5))), y1 = std::min(h - 1, static_cast<int>(std::ceil(maxy)));
  const float cr = static_cast<float>(color.x()), cg = static_cast<float>(color.y()), cb = static_cast<float>(color.z());
  const std::size_t hw = static_cast<std::size_t>(w) * h;
  for (int y = y0; y <= y1; ++y) {
    const double py = y + 0.5;
    for (int x = x0; x <= x1; ++x) {
      const double px = x + 0.5;
      bool inside = true;
      for (std::size_t i = 0; i < pts.size() && inside; ++i) {
        const auto& a = pts[i];
        const auto& b = pts[(i + 1) % pts.size()];
        inside = sgn * ((b.x() - a.x()) * (py - a.y()) - (b.y() - a.y()) * (px - a.x())) >= 0;
      }
      if (!inside) continue;
      const std::size_t idx = static_cast<std::size_t>(y) * w + x;
      rgb[idx] = cr;
      rgb[hw + idx] = cg;
      rgb[2 * hw + idx] = cb;
    }
  }
}

}  // namespace detail

// Draws a world-space convex polygon into a planar CHW buffer.
inline void draw_polygon(const std::vector<Vector3d>& world, const Vector3d& color, const geometry::CameraPose& pose,
                         const geometry::Intrinsics& k, const RenderOptions& opt, std::vector<float>& rgb) {
  std::vector<Vector3d> cam;
  cam.reserve(world.size());
  for (const auto& p : world) cam.push_back(pose.to_camera(p));
  cam = detail::clip_near(cam, opt.near);
  std::vector<Vector2d> img;
  img.reserve(cam.size());
  for (const auto& p : cam) img.emplace_back(k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy);
  detail::fill_convex(img, color, k.width, k.height, rgb);
}

// Pinhole rasterisation: background, then ground tiles, then boxes from far
// to near with back faces culled; flat Lambertian shading per face.
inline data::ImageTensor render_procedural(const ProceduralScene& scene, const geometry::CameraPose& pose,
                                           const geometry::Intrinsics& k, const RenderOptions& opt = {}) {
  if (!k.valid()) throw std::invalid_argument("render: degenerate intrinsics");
  const int w = k.width, h = k.height;
  const std::size_t hw = static_cast<std::size_t>(w) * h;
  std::vector<float> rgb(3 * hw);
  for (int c = 0; c < 3; ++c) std::fill(rgb.begin() + c * hw, rgb.begin() + (c + 1) * hw, static_cast<float>(scene.background[c]));

  const Vector3d eye = pose.translation;
  if (scene.ground_extent > 0 && eye.z() > 0) {
    const int n = static_cast<int>(std::ceil(2 * scene.ground_extent / scene.tile_size));
    const Vector3d up = Vector3d::UnitZ();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double x0 = -scene.ground_extent + i * scene.tile_size, y0 = -scene.ground_extent + j * scene.tile_size;
        const double x1 = std::min(x0 + scene.tile_size, scene.ground_extent), y1 = std::min(y0 + scene.tile_size, scene.ground_extent);
        const Vector3d& alb = (i + j) % 2 ? scene.ground_b : scene.ground_a;
        draw_polygon({{x0, y0, 0}, {x1, y0, 0}, {x1, y1, 0}, {x0, y1, 0}}, shade(scene, alb, up), pose, k, opt, rgb);
      }
  }

  std::vector<std::size_t> order(scene.primitives.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return box_distance(scene.primitives[a], eye) > box_distance(scene.primitives[b], eye);
  });
  for (std::size_t idx : order) {
    const auto& box = scene.primitives[idx];
    for (const auto& f : cuboid_faces(box)) {
      const Vector3d fc = 0.25 * (f.corners[0] + f.corners[1] + f.corners[2] + f.corners[3]);
      if (f.normal.dot(eye - fc) <= 0) continue;
      draw_polygon({f.corners.begin(), f.corners.end()}, shade(scene, box.albedo, f.normal), pose, k, opt, rgb);
    }
  }
  data::ImageTensor out{Tensor<float>({3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)}, std::move(rgb)),
                        data::ImageSource::synthesized};
  return out;
}

}  // namespace scenead::render
