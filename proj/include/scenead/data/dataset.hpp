#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scenead/data/image.hpp"
#include "scenead/geometry/pose.hpp"
#include "scenead/io/files.hpp"
#include "scenead/io/png.hpp"

namespace scenead::data {

namespace fs = std::filesystem;

enum class Augmentation { none, qanv, inv, both };

inline std::string to_string(Augmentation a) {
  switch (a) {
    case Augmentation::none: return "none";
    case Augmentation::qanv: return "qanv";
    case Augmentation::inv: return "inv";
    case Augmentation::both: return "both";
  }
  return "?";
}

inline Augmentation augmentation_from_string(const std::string& s) {
  if (s == "none" || s == "noaug") return Augmentation::none;
  if (s == "qanv") return Augmentation::qanv;
  if (s == "inv") return Augmentation::inv;
  if (s == "both") return Augmentation::both;
  throw std::invalid_argument("unknown augmentation variant '" + s + "'");
}

inline bool uses_qanv(Augmentation a) { return a == Augmentation::qanv || a == Augmentation::both; }
inline bool uses_inv(Augmentation a) { return a == Augmentation::inv || a == Augmentation::both; }

class DatasetError : public std::runtime_error {
 public:
  enum class Kind { missing_root, missing_mask, dim_mismatch, bad_manifest, unreadable_file, missing_augmentation, empty_test_set };
  DatasetError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
  Kind kind;
};

// Relative path (from the dataset root) plus where the image came from.
struct ImageRef {
  std::string path;
  ImageSource source = ImageSource::captured;
  bool operator==(const ImageRef&) const = default;
};

struct Mask {
  int width = 0, height = 0;
  std::vector<std::uint8_t> values;  // 0/1, row-major
  std::size_t count() const { return static_cast<std::size_t>(std::count(values.begin(), values.end(), 1)); }
  bool operator==(const Mask&) const = default;
};

struct SceneDataset {
  fs::path root;
  std::vector<ImageRef> train_images;
  std::vector<ImageRef> test_images;
  std::vector<std::string> test_masks;  // parallel to test_images
  std::map<std::string, geometry::CameraPose> poses;
  std::map<std::string, geometry::Intrinsics> intrinsics;
  Augmentation augmentation_tag = Augmentation::none;
  nlohmann::json manifest;

  fs::path abs(const std::string& rel) const { return root / rel; }
  std::size_t synthesized_count() const {
    return static_cast<std::size_t>(std::count_if(train_images.begin(), train_images.end(),
                                                  [](const ImageRef& r) { return r.source == ImageSource::synthesized; }));
  }
};

namespace layout {
inline const char* train_good = "train/good";
inline const char* train_qanv = "train/qanv";
inline const char* train_inv = "train/inv";
inline const char* test = "test";
inline const char* ground_truth = "ground_truth";
inline const char* poses = "poses.json";
inline const char* manifest = "manifest.json";

inline std::string mask_for(const std::string& test_rel) {
  return std::string(ground_truth) + "/" + fs::path(test_rel).stem().string() + "_mask.png";
}
}  // namespace layout

// Lexicographically sorted *.png files of root/sub, as root-relative paths.
inline std::vector<std::string> list_pngs(const fs::path& root, const std::string& sub) {
  std::vector<std::string> out;
  const fs::path dir = root / sub;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(sub + "/" + e.path().filename().string());
  std::sort(out.begin(), out.end());
  return out;
}

// Any channel > 127 is anomalous.
inline Mask mask_from_image(const io::Image8& im) {
  Mask m{im.width, im.height, std::vector<std::uint8_t>(static_cast<std::size_t>(im.width) * im.height)};
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    std::uint8_t v = 0;
    for (int c = 0; c < im.channels; ++c) v = std::max(v, im.pixels[i * im.channels + c]);
    m.values[i] = v > 127 ? 1 : 0;
  }
  return m;
}

inline Mask load_binary_mask(const fs::path& p) {
  try {
    return mask_from_image(io::read_png(p, 3));
  } catch (const io::IoError& e) {
    throw DatasetError(DatasetError::Kind::unreadable_file, e.what());
  }
}

inline void save_mask(const fs::path& p, const Mask& m) {
  io::Image8 im(m.width, m.height, 1);
  for (std::size_t i = 0; i < m.values.size(); ++i) im.pixels[i] = m.values[i] ? 255 : 0;
  io::write_png(p, im);
}

inline nlohmann::json count_files(const fs::path& root) {
  return {{layout::train_good, list_pngs(root, layout::train_good).size()},
          {layout::train_qanv, list_pngs(root, layout::train_qanv).size()},
          {layout::train_inv, list_pngs(root, layout::train_inv).size()},
          {layout::test, list_pngs(root, layout::test).size()},
          {layout::ground_truth, list_pngs(root, layout::ground_truth).size()}};
}

inline SceneDataset load_dataset(const fs::path& root, Augmentation variant) {
  using K = DatasetError::Kind;
  if (!fs::is_directory(root)) throw DatasetError(K::missing_root, "dataset root not found: " + root.string());
  SceneDataset ds;
  ds.root = root;
  ds.augmentation_tag = variant;

  const fs::path mpath = root / layout::manifest;
  if (!fs::exists(mpath)) throw DatasetError(K::bad_manifest, "missing " + mpath.string());
  try {
    ds.manifest = io::read_json(mpath);
  } catch (const io::IoError& e) {
    throw DatasetError(K::bad_manifest, e.what());
  }
  if (!ds.manifest.contains("counts") || !ds.manifest["counts"].is_object())
    throw DatasetError(K::bad_manifest, "manifest has no 'counts' object");
  const auto on_disk = count_files(root);
  for (const auto& [key, val] : ds.manifest["counts"].items()) {
    if (!on_disk.contains(key)) throw DatasetError(K::bad_manifest, "manifest counts unknown split '" + key + "'");
    if (val.get<std::size_t>() != on_disk[key].get<std::size_t>())
      throw DatasetError(K::bad_manifest, "manifest says " + std::to_string(val.get<std::size_t>()) + " files in '" + key +
                                              "' but " + std::to_string(on_disk[key].get<std::size_t>()) + " are on disk");
  }

  for (const auto& p : list_pngs(root, layout::train_good)) ds.train_images.push_back({p, ImageSource::captured});
  auto merge = [&](const char* sub) {
    auto files = list_pngs(root, sub);
    if (files.empty())
      throw DatasetError(K::missing_augmentation, std::string("variant '") + to_string(variant) + "' needs images in " + sub);
    for (const auto& p : files) ds.train_images.push_back({p, ImageSource::synthesized});
  };
  if (uses_qanv(variant)) merge(layout::train_qanv);
  if (uses_inv(variant)) merge(layout::train_inv);

  std::map<std::string, bool> mask_used;
  for (const auto& m : list_pngs(root, layout::ground_truth)) mask_used[m] = false;
  for (const auto& t : list_pngs(root, layout::test)) {
    const std::string m = layout::mask_for(t);
    if (!mask_used.count(m)) throw DatasetError(K::missing_mask, "test image " + t + " has no mask " + m);
    mask_used[m] = true;
    io::PngHeader hi, hm;
    try {
      hi = io::read_png_header(root / t);
      hm = io::read_png_header(root / m);
    } catch (const io::IoError& e) {
      throw DatasetError(K::unreadable_file, e.what());
    }
    if (hi.width != hm.width || hi.height != hm.height)
      throw DatasetError(K::dim_mismatch, "mask " + m + " is " + std::to_string(hm.width) + "x" + std::to_string(hm.height) +
                                              " but " + t + " is " + std::to_string(hi.width) + "x" + std::to_string(hi.height));
    ds.test_images.push_back({t, ImageSource::captured});
    ds.test_masks.push_back(m);
  }
  for (const auto& [m, used] : mask_used)
    if (!used) throw DatasetError(K::bad_manifest, "mask " + m + " has no test image");

  const fs::path ppath = root / layout::poses;
  if (fs::exists(ppath)) {
    try {
      auto pf = geometry::pose_file_from_json(io::read_json(ppath));
      ds.poses = std::move(pf.poses);
      ds.intrinsics = std::move(pf.intrinsics);
    } catch (const std::exception& e) {
      throw DatasetError(K::bad_manifest, std::string("poses.json: ") + e.what());
    }
  }
  return ds;
}

struct PixelStats {
  double mean_fraction = 0, std_fraction = 0, min_fraction = 0, max_fraction = 0;
  std::vector<double> per_image;
};

// Population standard deviation over per-image fractions.
inline PixelStats anomaly_pixel_stats(const std::vector<Mask>& masks) {
  if (masks.empty()) throw DatasetError(DatasetError::Kind::empty_test_set, "no test masks");
  PixelStats s;
  for (const auto& m : masks) s.per_image.push_back(static_cast<double>(m.count()) / static_cast<double>(m.values.size()));
  const double n = static_cast<double>(s.per_image.size());
  for (double f : s.per_image) s.mean_fraction += f / n;
  for (double f : s.per_image) s.std_fraction += (f - s.mean_fraction) * (f - s.mean_fraction) / n;
  s.std_fraction = std::sqrt(s.std_fraction);
  s.min_fraction = *std::min_element(s.per_image.begin(), s.per_image.end());
  s.max_fraction = *std::max_element(s.per_image.begin(), s.per_image.end());
  return s;
}

inline PixelStats anomaly_pixel_stats(const SceneDataset& ds) {
  std::vector<Mask> masks;
  for (const auto& m : ds.test_masks) masks.push_back(load_binary_mask(ds.abs(m)));
  return anomaly_pixel_stats(masks);
}

inline nlohmann::json to_json(const PixelStats& s) {
  return {{"mean_fraction", s.mean_fraction}, {"std_fraction", s.std_fraction},
          {"min_fraction", s.min_fraction}, {"max_fraction", s.max_fraction}};
}

}  // namespace scenead::data
