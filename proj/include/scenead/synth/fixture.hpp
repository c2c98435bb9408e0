#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "scenead/data/dataset.hpp"
#include "scenead/render/anomaly.hpp"
#include "scenead/synth/augment.hpp"

namespace scenead::synth {

struct FixtureSpec {
  std::uint64_t seed = 7;
  int n_train = 64;
  int n_query = 32;
  int image_size = 256;
  int n_boxes = 10;
  double hfov_deg = 60.0;
  double ring_radius = 5.5;
  double radius_jitter = 0.10;  // relative
  double min_elevation_deg = 22.0, max_elevation_deg = 45.0;
  // Accepted per-query anomalous fraction; outside it the draw is retried.
  double min_fraction = 0.0003, max_fraction = 0.05;
  int max_retries = 40;
};

inline nlohmann::json to_json(const FixtureSpec& f) {
  return {{"seed", f.seed},           {"n_train", f.n_train},
          {"n_query", f.n_query},     {"image_size", f.image_size},
          {"n_boxes", f.n_boxes},     {"hfov_deg", f.hfov_deg},
          {"ring_radius", f.ring_radius}, {"radius_jitter", f.radius_jitter},
          {"min_elevation_deg", f.min_elevation_deg}, {"max_elevation_deg", f.max_elevation_deg},
          {"min_fraction", f.min_fraction}, {"max_fraction", f.max_fraction}, {"max_retries", f.max_retries}};
}

inline FixtureSpec fixture_spec_from_json(const nlohmann::json& j) {
  FixtureSpec f;
  f.seed = j.value("seed", f.seed);
  f.n_train = j.value("n_train", f.n_train);
  f.n_query = j.value("n_query", f.n_query);
  f.image_size = j.value("image_size", f.image_size);
  f.n_boxes = j.value("n_boxes", f.n_boxes);
  f.hfov_deg = j.value("hfov_deg", f.hfov_deg);
  f.ring_radius = j.value("ring_radius", f.ring_radius);
  f.radius_jitter = j.value("radius_jitter", f.radius_jitter);
  f.min_elevation_deg = j.value("min_elevation_deg", f.min_elevation_deg);
  f.max_elevation_deg = j.value("max_elevation_deg", f.max_elevation_deg);
  f.min_fraction = j.value("min_fraction", f.min_fraction);
  f.max_fraction = j.value("max_fraction", f.max_fraction);
  f.max_retries = j.value("max_retries", f.max_retries);
  return f;
}

// Cameras on a ring around the scene centre at random heights, radius
// jittered, each looking at a slightly jittered point near the centre.
inline std::vector<CameraPose> ring_poses(int n, const FixtureSpec& f, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0, 1), jit(-1, 1);
  std::vector<CameraPose> out;
  const double phase = 2 * M_PI * u(rng);
  for (int i = 0; i < n; ++i) {
    const double az = phase + 2 * M_PI * (i + 0.35 * jit(rng)) / n;
    const double el = (f.min_elevation_deg + (f.max_elevation_deg - f.min_elevation_deg) * u(rng)) * M_PI / 180.0;
    const double r = f.ring_radius * (1 + f.radius_jitter * jit(rng));
    const Eigen::Vector3d eye(r * std::cos(el) * std::cos(az), r * std::cos(el) * std::sin(az), r * std::sin(el));
    const Eigen::Vector3d target(0.4 * jit(rng), 0.4 * jit(rng), 0.3 * u(rng));
    out.push_back(geometry::look_at(eye, target));
  }
  return out;
}

struct QueryAnomaly {
  render::AnomalyKind kind;
  render::AnomalyParams params;
};

inline QueryAnomaly draw_anomaly(const render::ProceduralScene& s, std::mt19937_64& rng) {
  // removals only expose familiar content, so they are the rare kind
  std::discrete_distribution<int> kind({0.4, 0.2, 0.4});
  std::uniform_real_distribution<double> u(0, 1), pos(-2.3, 2.3), sz(0.2, 0.45);
  const auto foreign = [&] {
    const double h = render::reserved_hue_lo + (render::reserved_hue_hi - render::reserved_hue_lo) * u(rng);
    return render::hsv_to_rgb(h, 0.85 + 0.15 * u(rng), 0.85 + 0.15 * u(rng));
  };
  QueryAnomaly a{static_cast<render::AnomalyKind>(kind(rng)), {}};
  if (s.primitives.empty()) a.kind = render::AnomalyKind::add_primitive;
  if (a.kind == render::AnomalyKind::add_primitive) {
    render::Cuboid c;
    for (int tries = 0; tries < 100; ++tries) {
      c.size = {sz(rng), sz(rng), sz(rng)};
      c.center = {pos(rng), pos(rng), 0.5 * c.size.z()};
      bool clash = false;
      for (const auto& o : s.primitives) clash = clash || render::overlaps_xy(c, o, 0.05);
      if (!clash) break;
    }
    c.albedo = foreign();
    a.params.added = c;
  } else {
    a.params.target = std::uniform_int_distribution<std::size_t>(0, s.primitives.size() - 1)(rng);
    if (a.kind == render::AnomalyKind::recolor_primitive) {
      a.params.albedo = foreign();
    }
  }
  return a;
}

struct FixtureResult {
  data::SceneDataset dataset;
  render::ProceduralScene scene;
  std::vector<std::string> warnings;
  data::PixelStats stats;
};

inline std::string frame_name(int i) {
  char b[16];
  std::snprintf(b, sizeof b, "%04d.png", i);
  return b;
}

// Builds the complete synthetic dataset tree under `root` (which must not
// already contain a dataset).
inline FixtureResult build_fixture(const fs::path& root, const FixtureSpec& f) {
  if (f.n_train < 1 || f.n_query < 1) throw std::invalid_argument("fixture needs at least one train and one query image");
  if (f.image_size < 16) throw std::invalid_argument("fixture image size too small");
  FixtureResult out;
  out.scene = render::generate_scene(f.seed, f.n_boxes);
  const auto k = Intrinsics::from_fov(f.image_size, f.image_size, f.hfov_deg);

  std::mt19937_64 train_rng(f.seed * 3 + 1), query_rng(f.seed * 3 + 2), anomaly_rng(f.seed * 3 + 3);
  const auto train_poses = ring_poses(f.n_train, f, train_rng);
  const auto query_poses = ring_poses(f.n_query, f, query_rng);

  geometry::PoseFile pf;
  pf.intrinsics["cam0"] = k;
  for (int i = 0; i < f.n_train; ++i) {
    const std::string rel = std::string(data::layout::train_good) + "/" + frame_name(i);
    io::write_png(root / rel, data::to_image8(render::render_procedural(out.scene, train_poses[i], k)));
    pf.poses[rel] = train_poses[i];
  }

  nlohmann::json anomalies = nlohmann::json::array();
  std::vector<data::Mask> masks;
  for (int i = 0; i < f.n_query; ++i) {
    render::InjectedAnomaly inj{out.scene, out.scene, render::AnomalyKind::add_primitive};
    data::Mask mask;
    QueryAnomaly a{};
    double frac = 0;
    int attempt = 0;
    for (; attempt < f.max_retries; ++attempt) {
      a = draw_anomaly(out.scene, anomaly_rng);
      inj = render::inject_anomaly(out.scene, a.kind, a.params);
      mask = inj.mask(query_poses[i], k);
      frac = static_cast<double>(mask.count()) / static_cast<double>(mask.values.size());
      if (frac >= f.min_fraction && frac <= f.max_fraction) break;
    }
    const std::string rel = std::string(data::layout::test) + "/" + frame_name(i);
    if (attempt == f.max_retries)
      out.warnings.push_back(rel + ": anomalous fraction " + std::to_string(frac) + " outside [" +
                             std::to_string(f.min_fraction) + ", " + std::to_string(f.max_fraction) + "]");
    io::write_png(root / rel, data::to_image8(render::render_procedural(inj.scene, query_poses[i], k)));
    data::save_mask(root / data::layout::mask_for(rel), mask);
    pf.poses[rel] = query_poses[i];
    anomalies.push_back({{"query", rel}, {"kind", render::to_string(a.kind)}, {"fraction", frac}});
    masks.push_back(std::move(mask));
  }
  out.stats = data::anomaly_pixel_stats(masks);

  io::write_json(root / data::layout::poses, geometry::to_json(pf));
  io::write_json(root / "scene.json", render::to_json(out.scene));
  nlohmann::json manifest = {{"counts", data::count_files(root)},
                             {"fixture", to_json(f)},
                             {"renderer", "procedural"},
                             {"localizer", "none"},
                             {"anomalies", anomalies},
                             {"anomaly_pixel_stats", data::to_json(out.stats)},
                             {"warnings", out.warnings},
                             {"augmentation", nlohmann::json::object()}};
  io::write_json(root / data::layout::manifest, manifest);
  out.dataset = data::load_dataset(root, data::Augmentation::none);
  return out;
}

// Camera-centre spread of the scene layout; scale for the noisy localizer.
inline double scene_diameter(const render::ProceduralScene& s) {
  return s.ground_extent > 0 ? 2 * std::sqrt(2.0) * s.ground_extent : 1.0;
}

// Query poses recorded by the fixture (test/ entries of poses.json).
inline std::map<std::string, CameraPose> query_truth(const data::SceneDataset& ds) {
  std::map<std::string, CameraPose> m;
  for (const auto& q : ds.test_images)
    if (auto it = ds.poses.find(q.path); it != ds.poses.end()) m[q.path] = it->second;
  return m;
}

}  // namespace scenead::synth
