#pragma once

#include <random>
#include <string>
#include <vector>

#include "scenead/core/nn.hpp"
#include "scenead/model/config.hpp"

namespace scenead {

// Ordered multiscale feature maps, level 0 at stride 4.
template <typename T>
struct FeaturePyramid {
  std::vector<Var<T>> levels;

  std::vector<Shape> shapes() const {
    std::vector<Shape> s;
    for (const auto& l : levels) s.push_back(l.shape());
    return s;
  }
};

namespace detail {

// ResNet bottleneck block: 1x1 reduce, grouped 3x3, 1x1 expand, residual.
template <typename T>
class BottleneckBlock {
 public:
  BottleneckBlock(int in, int width, int out, int stride, int groups, std::mt19937_64& rng)
      : conv1_(in, width, 1, {}, false, rng),
        bn1_(width),
        conv2_(width, width, 3, {stride, 1, groups}, false, rng),
        bn2_(width),
        conv3_(width, out, 1, {}, false, rng),
        bn3_(out),
        has_down_(stride != 1 || in != out) {
    if (has_down_) {
      down_conv_ = nn::Conv2d<T>(in, out, 1, {stride, 0, 1}, false, rng);
      down_bn_ = nn::BatchNorm2d<T>(out);
    }
  }

  Var<T> operator()(const Var<T>& x) {
    auto y = ops::relu(bn1_(conv1_(x), false));
    y = ops::relu(bn2_(conv2_(y), false));
    y = bn3_(conv3_(y), false);
    auto skip = has_down_ ? down_bn_(down_conv_(x), false) : x;
    return ops::relu(ops::add(y, skip));
  }

  void collect(const std::string& prefix, nn::StateList<T>& out) {
    conv1_.collect(nn::join(prefix, "conv1"), out);
    bn1_.collect(nn::join(prefix, "bn1"), out);
    conv2_.collect(nn::join(prefix, "conv2"), out);
    bn2_.collect(nn::join(prefix, "bn2"), out);
    conv3_.collect(nn::join(prefix, "conv3"), out);
    bn3_.collect(nn::join(prefix, "bn3"), out);
    if (has_down_) {
      down_conv_.collect(nn::join(prefix, "downsample.0"), out);
      down_bn_.collect(nn::join(prefix, "downsample.1"), out);
    }
  }

 private:
  nn::Conv2d<T> conv1_;
  nn::BatchNorm2d<T> bn1_;
  nn::Conv2d<T> conv2_;
  nn::BatchNorm2d<T> bn2_;
  nn::Conv2d<T> conv3_;
  nn::BatchNorm2d<T> bn3_;
  bool has_down_;
  nn::Conv2d<T> down_conv_;
  nn::BatchNorm2d<T> down_bn_;
};

}  // namespace detail

// Frozen teacher: ResNet-style stem plus the first three bottleneck stages.
// Parameter names follow torchvision so exported weights load by name.
// Batch norm always runs on its running statistics.
template <typename T>
class TeacherEncoder {
 public:
  explicit TeacherEncoder(const ModelConfig& cfg) {
    std::mt19937_64 rng(cfg.teacher_seed * 0x9E3779B97F4A7C15ULL + 1);
    const int d = cfg.divisor();
    int groups = 1;
    double width_factor = 2.0;  // wide_resnet50_2: base width 128
    std::vector<int> blocks{3, 4, 6};
    switch (cfg.backbone) {
      case BackboneKind::resnext_pretrained:
        groups = 32;
        width_factor = 2.0;  // resnext 32x4d: 64 * 4/64 * 32 = 128 for planes 64
        if (cfg.backbone_depth == 101) blocks = {3, 4, 23};
        break;
      case BackboneKind::rd_default_pretrained:
        if (cfg.backbone_depth == 101) blocks = {3, 4, 23};
        break;
      case BackboneKind::tiny_random:
        groups = cfg.tiny_groups;
        blocks = {1, 1, 1};
        break;
    }
    const int stem = 64 / d;
    stem_conv_ = nn::Conv2d<T>(3, stem, 7, {2, 3, 1}, false, rng);
    stem_bn_ = nn::BatchNorm2d<T>(stem);
    int in = stem;
    const int planes[3] = {64 / d, 128 / d, 256 / d};
    for (int s = 0; s < 3; ++s) {
      const int width = static_cast<int>(planes[s] * width_factor);
      const int out = planes[s] * 4;
      if (width % groups) throw std::invalid_argument("tiny_groups must divide the block width");
      std::vector<detail::BottleneckBlock<T>> stage;
      for (int b = 0; b < blocks[s]; ++b) {
        stage.emplace_back(in, width, out, (b == 0 && s > 0) ? 2 : 1, groups, rng);
        in = out;
      }
      stages_.push_back(std::move(stage));
    }
  }

  FeaturePyramid<T> operator()(const Var<T>& x) {
    auto y = ops::relu(stem_bn_(stem_conv_(x), false));
    y = ops::max_pool2d(y, 3, 2, 1);
    FeaturePyramid<T> out;
    for (auto& stage : stages_) {
      for (auto& block : stage) y = block(y);
      out.levels.push_back(y);
    }
    return out;
  }

  void collect(const std::string& prefix, nn::StateList<T>& out) {
    stem_conv_.collect(nn::join(prefix, "conv1"), out);
    stem_bn_.collect(nn::join(prefix, "bn1"), out);
    for (std::size_t s = 0; s < stages_.size(); ++s)
      for (std::size_t b = 0; b < stages_[s].size(); ++b)
        stages_[s][b].collect(nn::join(prefix, "layer" + std::to_string(s + 1) + "." +
                                                   std::to_string(b)),
                              out);
  }

 private:
  nn::Conv2d<T> stem_conv_;
  nn::BatchNorm2d<T> stem_bn_;
  std::vector<std::vector<detail::BottleneckBlock<T>>> stages_;
};

}  // namespace scenead
