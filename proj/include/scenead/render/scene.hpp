#pragma once

#include <Eigen/Core>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "json.hpp"

namespace scenead::render {

struct Cuboid {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d::Ones();  // full extents along x, y, z
  Eigen::Vector3d albedo = Eigen::Vector3d::Constant(0.5);

  Eigen::Vector3d lo() const { return center - 0.5 * size; }
  Eigen::Vector3d hi() const { return center + 0.5 * size; }
  bool operator==(const Cuboid& o) const { return center == o.center && size == o.size && albedo == o.albedo; }
};

// Checkered ground square at z = 0, axis-aligned colored boxes, one sun.
struct ProceduralScene {
  double ground_extent = 4.0;  // half side length; 0 disables the ground
  double tile_size = 0.5;
  Eigen::Vector3d ground_a{0.55, 0.55, 0.52};
  Eigen::Vector3d ground_b{0.38, 0.40, 0.42};
  std::vector<Cuboid> primitives;
  Eigen::Vector3d light_dir{-0.45, -0.3, 0.85};  // towards the light
  double ambient = 0.35;
  Eigen::Vector3d background{0.62, 0.74, 0.88};
  std::uint64_t seed = 0;

  bool operator==(const ProceduralScene& o) const {
    return ground_extent == o.ground_extent && tile_size == o.tile_size && ground_a == o.ground_a &&
           ground_b == o.ground_b && primitives == o.primitives && light_dir == o.light_dir &&
           ambient == o.ambient && background == o.background && seed == o.seed;
  }
};

inline void validate(const ProceduralScene& s) {
  if (s.ground_extent < 0 || (s.ground_extent > 0 && s.tile_size <= 0))
    throw std::invalid_argument("scene: bad ground extent or tile size");
  for (const auto& c : s.primitives)
    if (!(c.size.array() > 0).all()) throw std::invalid_argument("scene: primitive with non-positive size");
  if (s.light_dir.norm() == 0) throw std::invalid_argument("scene: zero light direction");
}

inline bool overlaps_xy(const Cuboid& a, const Cuboid& b, double gap) {
  return a.lo().x() < b.hi().x() + gap && b.lo().x() < a.hi().x() + gap && a.lo().y() < b.hi().y() + gap &&
         b.lo().y() < a.hi().y() + gap;
}

inline Eigen::Vector3d hsv_to_rgb(double h, double s, double v) {
  const double c = v * s, hp = std::fmod(h, 1.0) * 6.0, x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
  Eigen::Vector3d rgb;
  if (hp < 1) rgb = {c, x, 0};
  else if (hp < 2) rgb = {x, c, 0};
  else if (hp < 3) rgb = {0, c, x};
  else if (hp < 4) rgb = {0, x, c};
  else if (hp < 5) rgb = {x, 0, c};
  else rgb = {c, 0, x};
  return rgb.array() + (v - c);
}

// Hue band [lo, hi) kept out of the normal scene; fixture anomalies use it.
inline constexpr double reserved_hue_lo = 0.08, reserved_hue_hi = 0.22;

// Boxes resting on the ground, non-overlapping in plan view, inside
// [-layout_extent, layout_extent]^2.
inline ProceduralScene generate_scene(std::uint64_t seed, int n_boxes = 10, double layout_extent = 2.5) {
  ProceduralScene s;
  s.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-layout_extent, layout_extent), foot(0.3, 1.0), height(0.3, 1.4),
      hue(0, 1 - (reserved_hue_hi - reserved_hue_lo)), sat(0.45, 0.9), val(0.5, 0.95);
  for (int tries = 0; static_cast<int>(s.primitives.size()) < n_boxes && tries < 2000; ++tries) {
    Cuboid c;
    c.size = {foot(rng), foot(rng), height(rng)};
    c.center = {pos(rng), pos(rng), 0.5 * c.size.z()};
    double h = hue(rng);
    if (h >= reserved_hue_lo) h += reserved_hue_hi - reserved_hue_lo;
    c.albedo = hsv_to_rgb(h, sat(rng), val(rng));
    if ((c.hi().head<2>().array().abs() > layout_extent).any() || (c.lo().head<2>().array().abs() > layout_extent).any())
      continue;
    bool clash = false;
    for (const auto& o : s.primitives) clash = clash || overlaps_xy(c, o, 0.15);
    if (!clash) s.primitives.push_back(c);
  }
  return s;
}

inline nlohmann::json vec_json(const Eigen::Vector3d& v) { return {v.x(), v.y(), v.z()}; }
inline Eigen::Vector3d vec_from(const nlohmann::json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

inline nlohmann::json to_json(const ProceduralScene& s) {
  nlohmann::json prims = nlohmann::json::array();
  for (const auto& c : s.primitives)
    prims.push_back({{"center", vec_json(c.center)}, {"size", vec_json(c.size)}, {"albedo", vec_json(c.albedo)}});
  return {{"ground_extent", s.ground_extent}, {"tile_size", s.tile_size}, {"ground_a", vec_json(s.ground_a)},
          {"ground_b", vec_json(s.ground_b)}, {"primitives", prims},   {"light_dir", vec_json(s.light_dir)},
          {"ambient", s.ambient},             {"background", vec_json(s.background)}, {"seed", s.seed}};
}

inline ProceduralScene scene_from_json(const nlohmann::json& j) {
  ProceduralScene s;
  s.ground_extent = j.at("ground_extent");
  s.tile_size = j.at("tile_size");
  s.ground_a = vec_from(j.at("ground_a"));
  s.ground_b = vec_from(j.at("ground_b"));
  for (const auto& p : j.at("primitives"))
    s.primitives.push_back({vec_from(p.at("center")), vec_from(p.at("size")), vec_from(p.at("albedo"))});
  s.light_dir = vec_from(j.at("light_dir"));
  s.ambient = j.at("ambient");
  s.background = vec_from(j.at("background"));
  s.seed = j.at("seed");
  validate(s);
  return s;
}

}  // namespace scenead::render
