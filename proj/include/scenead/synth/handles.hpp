#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>

#include "scenead/data/image.hpp"
#include "scenead/geometry/pose.hpp"
#include "scenead/io/files.hpp"
#include "scenead/render/rasterizer.hpp"

namespace scenead::synth {

namespace fs = std::filesystem;
using geometry::CameraPose;
using geometry::Intrinsics;

// Pose in, image out. `key` names the requested view (used by file-based
// adapters; ignored by procedural renderers).
class RendererHandle {
 public:
  virtual ~RendererHandle() = default;
  virtual std::string scene_id() const = 0;
  virtual bool deterministic() const = 0;
  virtual bool has_ground_truth_geometry() const = 0;
  virtual data::ImageTensor render(const CameraPose& pose, const Intrinsics& k, const std::string& key) = 0;
};

// Image in, pose out; std::nullopt on failure.
class LocalizerHandle {
 public:
  virtual ~LocalizerHandle() = default;
  virtual std::string backend_id() const = 0;
  virtual std::optional<CameraPose> localize(const data::ImageTensor& query, const std::string& ref) = 0;
};

class ProceduralRenderer : public RendererHandle {
 public:
  explicit ProceduralRenderer(render::ProceduralScene scene) : scene_(std::move(scene)) { render::validate(scene_); }
  std::string scene_id() const override { return "procedural:" + std::to_string(scene_.seed); }
  bool deterministic() const override { return true; }
  bool has_ground_truth_geometry() const override { return true; }
  data::ImageTensor render(const CameraPose& pose, const Intrinsics& k, const std::string&) override {
    return render::render_procedural(scene_, pose, k);
  }
  const render::ProceduralScene& scene() const { return scene_; }

 private:
  render::ProceduralScene scene_;
};

class ExternalRenderMissing : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Reads renders produced by an outside tool (e.g. a NeRF) from a directory
// holding poses.json and <key> PNGs. Requests that are not there yet are
// collected so that the caller can write them out.
class ExternalRenderer : public RendererHandle {
 public:
  explicit ExternalRenderer(fs::path dir) : dir_(std::move(dir)) {
    if (fs::exists(dir_ / "poses.json")) {
      auto pf = geometry::pose_file_from_json(io::read_json(dir_ / "poses.json"));
      available_ = std::move(pf.poses);
    }
  }
  std::string scene_id() const override { return "external:" + dir_.string(); }
  bool deterministic() const override { return true; }
  bool has_ground_truth_geometry() const override { return false; }

  data::ImageTensor render(const CameraPose& pose, const Intrinsics& k, const std::string& key) override {
    auto it = available_.find(key);
    const fs::path png = dir_ / key;
    if (it == available_.end() || !fs::exists(png)) {
      pending_[key] = pose;
      throw ExternalRenderMissing("no external render for '" + key + "' in " + dir_.string());
    }
    if ((it->second.translation - pose.translation).norm() > 1e-6 ||
        geometry::rotation_angle(it->second.rotation, pose.rotation) > 1e-6)
      throw std::runtime_error("external render '" + key + "' was made at a different pose");
    auto im = data::load_image(png, data::ImageSource::synthesized);
    if (im.width() != k.width || im.height() != k.height)
      throw std::runtime_error("external render '" + key + "' has the wrong size");
    return im;
  }

  const std::map<std::string, CameraPose>& pending() const { return pending_; }

 private:
  fs::path dir_;
  std::map<std::string, CameraPose> available_;
  std::map<std::string, CameraPose> pending_;
};

// Returns the recorded pose of the query (synthetic scenes only).
class GroundTruthLocalizer : public LocalizerHandle {
 public:
  explicit GroundTruthLocalizer(std::map<std::string, CameraPose> truth) : truth_(std::move(truth)) {}
  std::string backend_id() const override { return "gt"; }
  std::optional<CameraPose> localize(const data::ImageTensor&, const std::string& ref) override {
    auto it = truth_.find(ref);
    if (it == truth_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::map<std::string, CameraPose> truth_;
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

// Ground truth plus a random rigid perturbation of fixed magnitude: a rotation
// of `rotation_deg` about a random axis and a translation of
// `translation_frac * scene_diameter` in a random direction. The draw depends
// only on (seed, ref), never on call order.
class NoisyLocalizer : public LocalizerHandle {
 public:
  NoisyLocalizer(std::map<std::string, CameraPose> truth, double scene_diameter, std::uint64_t seed,
                 double rotation_deg = 1.0, double translation_frac = 0.01)
      : truth_(std::move(truth)), diameter_(scene_diameter), seed_(seed), rot_deg_(rotation_deg), trans_frac_(translation_frac) {}
  std::string backend_id() const override { return "noisy"; }
  std::optional<CameraPose> localize(const data::ImageTensor&, const std::string& ref) override {
    auto it = truth_.find(ref);
    if (it == truth_.end()) return std::nullopt;
    std::mt19937_64 rng(seed_ ^ fnv1a(ref));
    std::normal_distribution<double> n(0, 1);
    Eigen::Vector3d axis(n(rng), n(rng), n(rng)), dir(n(rng), n(rng), n(rng));
    CameraPose p = it->second;
    const Eigen::Quaterniond dq(Eigen::AngleAxisd(rot_deg_ * M_PI / 180.0, axis.normalized()));
    p.rotation = geometry::canonical(dq * p.rotation);
    p.translation += dir.normalized() * trans_frac_ * diameter_;
    return p;
  }

 private:
  std::map<std::string, CameraPose> truth_;
  double diameter_;
  std::uint64_t seed_;
  double rot_deg_, trans_frac_;
};

// Reads query poses estimated by an outside pipeline (e.g. hloc) from a
// poses.json file; queries absent from the file count as failures.
class ExternalLocalizer : public LocalizerHandle {
 public:
  explicit ExternalLocalizer(const fs::path& poses_json)
      : poses_(geometry::pose_file_from_json(io::read_json(poses_json)).poses) {}
  std::string backend_id() const override { return "external"; }
  std::optional<CameraPose> localize(const data::ImageTensor&, const std::string& ref) override {
    auto it = poses_.find(ref);
    if (it == poses_.end()) return std::nullopt;
    return it->second;
  }

 private:
  std::map<std::string, CameraPose> poses_;
};

}  // namespace scenead::synth
