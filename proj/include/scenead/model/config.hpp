#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "json.hpp"

namespace scenead {

enum class BackboneKind { resnext_pretrained, rd_default_pretrained, tiny_random };

inline std::string to_string(BackboneKind b) {
  switch (b) {
    case BackboneKind::resnext_pretrained: return "resnext_pretrained";
    case BackboneKind::rd_default_pretrained: return "rd_default_pretrained";
    case BackboneKind::tiny_random: return "tiny_random";
  }
  return "?";
}

inline BackboneKind backbone_from_string(const std::string& s) {
  if (s == "resnext_pretrained") return BackboneKind::resnext_pretrained;
  if (s == "rd_default_pretrained") return BackboneKind::rd_default_pretrained;
  if (s == "tiny_random") return BackboneKind::tiny_random;
  throw std::invalid_argument("unknown backbone '" + s + "'");
}

// Shape record of one student attention module: (C_in, H_in) -> (C_out, H_out).
struct AttentionSpec {
  int c_in, h_in, c_out, h_out;
  bool operator==(const AttentionSpec&) const = default;
};

struct ModelConfig {
  BackboneKind backbone = BackboneKind::resnext_pretrained;
  bool use_attention_modules = true;
  int input_h = 256;
  int input_w = 256;
  // tiny_random only: all channel widths are the standard ones divided by this.
  int width_divisor = 8;
  // tiny_random only: grouped 3x3 convolutions in the encoder (1 = plain).
  int tiny_groups = 1;
  // 50 or 101 for the pretrained backbones.
  int backbone_depth = 50;
  std::string backbone_weights;
  std::uint64_t teacher_seed = 0;
  double smoothing_sigma = 4.0;
  // Per-channel standardisation applied after scaling pixels to [0, 1].
  std::array<double, 3> pixel_mean{0.485, 0.456, 0.406};
  std::array<double, 3> pixel_std{0.229, 0.224, 0.225};

  int divisor() const { return backbone == BackboneKind::tiny_random ? width_divisor : 1; }

  // Teacher stage widths (strides 4, 8, 16).
  std::array<int, 3> level_channels() const {
    const int d = divisor();
    return {256 / d, 512 / d, 1024 / d};
  }

  // Internal widths of the attention modules (64/128/256 at full scale).
  std::array<int, 3> attention_widths() const {
    const int d = divisor();
    return {std::max(1, 64 / d), std::max(1, 128 / d), std::max(1, 256 / d)};
  }

  // Index 0 is A^1 (deepest level, stride 16), index 2 is A^3 (stride 4).
  std::array<AttentionSpec, 3> attention_specs() const {
    const auto c = level_channels();
    return {AttentionSpec{c[2], input_h / 16, c[2], input_h / 16},
            AttentionSpec{c[1], input_h / 8, c[1], input_h / 8},
            AttentionSpec{c[0], input_h / 4, c[0], input_h / 4}};
  }

  void validate() const {
    if (input_h <= 0 || input_w <= 0 || input_h % 16 || input_w % 16)
      throw std::invalid_argument("input size must be a positive multiple of 16");
    if (input_h != input_w) throw std::invalid_argument("attention modules assume square inputs");
    if (width_divisor < 1 || 256 % width_divisor)
      throw std::invalid_argument("width_divisor must divide 256");
    if (tiny_groups < 1) throw std::invalid_argument("tiny_groups must be >= 1");
    if (backbone != BackboneKind::tiny_random && backbone_depth != 50 && backbone_depth != 101)
      throw std::invalid_argument("backbone_depth must be 50 or 101");
    if (smoothing_sigma < 0) throw std::invalid_argument("smoothing_sigma must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"backbone", to_string(c.backbone)},
                     {"use_attention_modules", c.use_attention_modules},
                     {"input_size", {c.input_h, c.input_w}},
                     {"width_divisor", c.width_divisor},
                     {"tiny_groups", c.tiny_groups},
                     {"backbone_depth", c.backbone_depth},
                     {"backbone_weights", c.backbone_weights},
                     {"teacher_seed", c.teacher_seed},
                     {"smoothing_sigma", c.smoothing_sigma},
                     {"pixel_mean", c.pixel_mean},
                     {"pixel_std", c.pixel_std}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.backbone = backbone_from_string(j.value("backbone", to_string(d.backbone)));
  c.use_attention_modules = j.value("use_attention_modules", d.use_attention_modules);
  if (j.contains("input_size")) {
    c.input_h = j.at("input_size").at(0).get<int>();
    c.input_w = j.at("input_size").at(1).get<int>();
  }
  c.width_divisor = j.value("width_divisor", d.width_divisor);
  c.tiny_groups = j.value("tiny_groups", d.tiny_groups);
  c.backbone_depth = j.value("backbone_depth", d.backbone_depth);
  c.backbone_weights = j.value("backbone_weights", d.backbone_weights);
  c.teacher_seed = j.value("teacher_seed", d.teacher_seed);
  c.smoothing_sigma = j.value("smoothing_sigma", d.smoothing_sigma);
  c.pixel_mean = j.value("pixel_mean", d.pixel_mean);
  c.pixel_std = j.value("pixel_std", d.pixel_std);
  c.validate();
}

}  // namespace scenead
