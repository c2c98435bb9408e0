#pragma once

#include <cmath>
#include <vector>

#include "scenead/model/omniad.hpp"

namespace scenead {

// Mean over levels of the mean over (N, H, W) of 1 - cos(teacher, student).
template <typename T>
Var<T> distillation_loss(const FeaturePyramid<T>& teacher, const FeaturePyramid<T>& student) {
  if (teacher.levels.size() != student.levels.size() || teacher.levels.empty())
    throw ShapeError("distillation_loss: pyramids have different depths");
  Var<T> total;
  for (std::size_t l = 0; l < teacher.levels.size(); ++l) {
    auto term = ops::mean(ops::cosine_distance(teacher.levels[l], student.levels[l]));
    total = total.defined() ? ops::add(total, term) : term;
  }
  return ops::scale(total, T{1} / static_cast<T>(teacher.levels.size()));
}

// Per-pixel score field for one image plus the per-level contributions it
// was summed from (each already upsampled to the image size).
template <typename T>
struct AnomalyMap {
  std::size_t height = 0, width = 0;
  std::vector<T> scores;
  std::vector<std::vector<T>> level_maps;

  T at(std::size_t y, std::size_t x) const { return scores[y * width + x]; }
};

// Separable Gaussian blur with reflect padding; kernel radius int(4 sigma + 0.5).
template <typename T>
std::vector<T> gaussian_blur(const std::vector<T>& img, std::size_t h, std::size_t w, double sigma) {
  if (sigma <= 0) return img;
  const int radius = static_cast<int>(4.0 * sigma + 0.5);
  std::vector<double> k(2 * radius + 1);
  double ks = 0;
  for (int i = -radius; i <= radius; ++i) ks += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= ks;
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
  };
  std::vector<double> tmp(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -radius; i <= radius; ++i)
        s += k[i + radius] * img[y * w + reflect(static_cast<int>(x) + i, static_cast<int>(w))];
      tmp[y * w + x] = s;
    }
  std::vector<T> out(h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double s = 0;
      for (int i = -radius; i <= radius; ++i)
        s += k[i + radius] * tmp[reflect(static_cast<int>(y) + i, static_cast<int>(h)) * w + x];
      out[y * w + x] = static_cast<T>(s);
    }
  return out;
}

// Builds anomaly maps from already computed pyramids (batch N -> N maps).
template <typename T>
std::vector<AnomalyMap<T>> anomaly_maps_from_features(const FeaturePyramid<T>& teacher,
                                                      const FeaturePyramid<T>& student,
                                                      std::size_t out_h, std::size_t out_w,
                                                      double sigma) {
  if (teacher.levels.size() != student.levels.size())
    throw ShapeError("anomaly map: pyramid depth mismatch");
  const std::size_t n = teacher.levels.at(0).shape()[0];
  std::vector<AnomalyMap<T>> maps(n);
  for (auto& m : maps) {
    m.height = out_h;
    m.width = out_w;
    m.scores.assign(out_h * out_w, T{0});
  }
  for (std::size_t l = 0; l < teacher.levels.size(); ++l) {
    auto d = ops::cosine_distance(teacher.levels[l].detached(), student.levels[l].detached());
    auto up = ops::upsample_bilinear(d, out_h, out_w);
    const T* v = up.value().data();
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<T> level(v + i * out_h * out_w, v + (i + 1) * out_h * out_w);
      for (std::size_t p = 0; p < level.size(); ++p) maps[i].scores[p] += level[p];
      maps[i].level_maps.push_back(std::move(level));
    }
  }
  for (auto& m : maps) m.scores = gaussian_blur(m.scores, out_h, out_w, sigma);
  return maps;
}

// Inference-mode anomaly maps for a batch of standardised images (N,3,H,W).
template <typename T>
std::vector<AnomalyMap<T>> anomaly_maps(OmniADModel<T>& model, const Tensor<T>& batch) {
  auto f = model.forward(Var<T>(batch), false);
  return anomaly_maps_from_features(f.teacher, f.student, batch.shape()[2], batch.shape()[3],
                                    model.config().smoothing_sigma);
}

}  // namespace scenead
