#pragma once

#include <cstdlib>
#include <optional>
#include <stdexcept>
#include <string>

#include "scenead/data/dataset.hpp"
#include "scenead/render/rasterizer.hpp"

namespace scenead::render {

enum class AnomalyKind { add_primitive, remove_primitive, recolor_primitive };

inline std::string to_string(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::add_primitive: return "add_primitive";
    case AnomalyKind::remove_primitive: return "remove_primitive";
    case AnomalyKind::recolor_primitive: return "recolor_primitive";
  }
  return "?";
}

struct AnomalyParams {
  std::size_t target = 0;                  // remove / recolor
  Cuboid added;                            // add
  Eigen::Vector3d albedo = Eigen::Vector3d::Zero();  // recolor
};

// Per-channel tolerance of the render-diff oracle, in 8-bit steps.
inline constexpr int kMaskTolerance = 2;

// Pixels where the two quantised renders differ by more than `tol`/255 in
// some channel.
inline data::Mask render_diff_mask(const data::ImageTensor& a, const data::ImageTensor& b, int tol = kMaskTolerance) {
  const auto ia = data::to_image8(a), ib = data::to_image8(b);
  if (ia.width != ib.width || ia.height != ib.height) throw ShapeError("render_diff_mask: size mismatch");
  data::Mask m{ia.width, ia.height, std::vector<std::uint8_t>(static_cast<std::size_t>(ia.width) * ia.height, 0)};
  for (std::size_t i = 0; i < m.values.size(); ++i)
    for (int c = 0; c < 3; ++c)
      if (std::abs(static_cast<int>(ia.pixels[i * 3 + c]) - static_cast<int>(ib.pixels[i * 3 + c])) > tol) m.values[i] = 1;
  return m;
}

struct InjectedAnomaly {
  ProceduralScene scene;
  ProceduralScene original;
  AnomalyKind kind;

  // Ground-truth mask at any pose.
  data::Mask mask(const geometry::CameraPose& pose, const geometry::Intrinsics& k) const {
    return render_diff_mask(render_procedural(original, pose, k), render_procedural(scene, pose, k));
  }
};

inline InjectedAnomaly inject_anomaly(const ProceduralScene& scene, AnomalyKind kind, const AnomalyParams& p) {
  InjectedAnomaly out{scene, scene, kind};
  auto need_target = [&] {
    if (p.target >= scene.primitives.size())
      throw std::out_of_range("inject_anomaly: missing target primitive " + std::to_string(p.target) + " (scene has " +
                              std::to_string(scene.primitives.size()) + ")");
  };
  switch (kind) {
    case AnomalyKind::add_primitive:
      if (!(p.added.size.array() > 0).all()) throw std::invalid_argument("inject_anomaly: added primitive has non-positive size");
      out.scene.primitives.push_back(p.added);
      break;
    case AnomalyKind::remove_primitive:
      need_target();
      out.scene.primitives.erase(out.scene.primitives.begin() + static_cast<std::ptrdiff_t>(p.target));
      break;
    case AnomalyKind::recolor_primitive:
      need_target();
      out.scene.primitives[p.target].albedo = p.albedo;
      break;
  }
  return out;
}

}  // namespace scenead::render
