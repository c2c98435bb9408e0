#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "scenead/data/dataset.hpp"
#include "scenead/geometry/pose.hpp"
#include "scenead/synth/handles.hpp"

namespace scenead::synth {

class AugmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthesizedView {
  std::string path;  // relative to the dataset root
  CameraPose pose;
  std::string origin;  // query ref (QANV) or "a->b@t" (INV)
};

struct AugmentResult {
  std::vector<SynthesizedView> views;
  std::size_t failures = 0;
  nlohmann::json provenance;
};

namespace detail {

inline std::string numbered(const char* prefix, std::size_t i) {
  char b[32];
  std::snprintf(b, sizeof b, "%s_%05zu.png", prefix, i);
  return b;
}

inline void clear_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) return;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") fs::remove(e.path());
}

inline const Intrinsics& intrinsics_of(const data::SceneDataset& ds, const CameraPose& p) {
  auto it = ds.intrinsics.find(p.intrinsics_ref);
  if (it == ds.intrinsics.end()) throw AugmentError("unknown intrinsics '" + p.intrinsics_ref + "'");
  return it->second;
}

}  // namespace detail

// Rewrites poses.json with the entries of `prefix` replaced by `views`, and
// refreshes the manifest counts plus the provenance record under `tag`.
inline void record_augmentation(const data::SceneDataset& ds, const std::string& prefix, const std::string& tag,
                                const AugmentResult& r) {
  geometry::PoseFile pf;
  pf.intrinsics = ds.intrinsics;
  const fs::path ppath = ds.root / data::layout::poses;
  if (fs::exists(ppath)) pf = geometry::pose_file_from_json(io::read_json(ppath));
  for (auto it = pf.poses.begin(); it != pf.poses.end();)
    it = it->first.rfind(prefix + "/", 0) == 0 ? pf.poses.erase(it) : std::next(it);
  for (const auto& v : r.views) pf.poses[v.path] = v.pose;
  io::write_json(ppath, geometry::to_json(pf));

  nlohmann::json m = io::read_json(ds.root / data::layout::manifest);
  m["counts"] = data::count_files(ds.root);
  m["augmentation"][tag] = r.provenance;
  io::write_json(ds.root / data::layout::manifest, m);
}

// INV: greedy trajectory through the captured training poses, k renders per
// consecutive pair, written to train/inv.
inline AugmentResult build_inv_augmentation(const data::SceneDataset& ds, RendererHandle& renderer, int k = 12,
                                            std::size_t start_index = 0, bool write = true) {
  std::vector<CameraPose> poses;
  std::vector<std::string> refs;
  for (const auto& ref : ds.train_images) {
    if (ref.source != data::ImageSource::captured) continue;
    auto it = ds.poses.find(ref.path);
    if (it == ds.poses.end()) throw AugmentError("missing pose for training image " + ref.path);
    poses.push_back(it->second);
    refs.push_back(ref.path);
  }
  if (poses.empty()) throw AugmentError("missing poses: no captured training images");
  const auto traj = geometry::build_greedy_trajectory(poses, start_index);
  const auto dense = geometry::densify_trajectory(poses, traj, k);

  AugmentResult r;
  const fs::path dir = ds.root / data::layout::train_inv;
  if (write) detail::clear_pngs(dir);
  for (std::size_t i = 0; i < dense.size(); ++i) {
    const std::size_t seg = i / static_cast<std::size_t>(k), step = i % static_cast<std::size_t>(k) + 1;
    SynthesizedView v{std::string(data::layout::train_inv) + "/" + detail::numbered("inv", i), dense[i],
                      refs[traj[seg]] + "->" + refs[traj[seg + 1]] + "@" + std::to_string(step) + "/" + std::to_string(k + 1)};
    if (write) {
      auto im = renderer.render(v.pose, detail::intrinsics_of(ds, v.pose), v.path);
      io::write_png(ds.root / v.path, data::to_image8(im));
    }
    r.views.push_back(std::move(v));
  }
  nlohmann::json order = nlohmann::json::array();
  for (auto t : traj) order.push_back(refs[t]);
  r.provenance = {{"k", k}, {"start_index", start_index}, {"renderer", renderer.scene_id()},
                  {"trajectory", order}, {"renders", r.views.size()}};
  if (write) record_augmentation(ds, data::layout::train_inv, "inv", r);
  return r;
}

// QANV: localise each query, render the non-anomalous scene there, write to
// train/qanv under the query's file name. Failed localisations are skipped.
inline AugmentResult build_qanv_augmentation(const data::SceneDataset& ds, RendererHandle& renderer,
                                             LocalizerHandle& localizer, bool write = true) {
  if (ds.test_images.empty()) throw AugmentError("QANV needs query images");
  AugmentResult r;
  const fs::path dir = ds.root / data::layout::train_qanv;
  if (write) detail::clear_pngs(dir);
  std::vector<std::string> failed;
  for (const auto& q : ds.test_images) {
    const auto query = data::load_image(ds.abs(q.path));
    auto pose = localizer.localize(query, q.path);
    if (!pose) {
      ++r.failures;
      failed.push_back(q.path);
      continue;
    }
    SynthesizedView v{std::string(data::layout::train_qanv) + "/" + fs::path(q.path).filename().string(), *pose, q.path};
    if (write) {
      const Intrinsics& k = detail::intrinsics_of(ds, v.pose);
      if (k.width != query.width() || k.height != query.height())
        throw AugmentError("intrinsics size differs from query image " + q.path);
      io::write_png(ds.root / v.path, data::to_image8(renderer.render(v.pose, k, v.path)));
    }
    r.views.push_back(std::move(v));
  }
  r.provenance = {{"renderer", renderer.scene_id()}, {"localizer", localizer.backend_id()},
                  {"queries", ds.test_images.size()}, {"renders", r.views.size()},
                  {"failures", r.failures}, {"failed", failed}};
  if (r.views.empty()) r.provenance["warning"] = "all localizations failed";
  if (write) record_augmentation(ds, data::layout::train_qanv, "qanv", r);
  return r;
}

}  // namespace scenead::synth
