#pragma once

#include <array>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "scenead/io/archive.hpp"
#include "scenead/model/attention_module.hpp"
#include "scenead/model/backbone.hpp"

namespace scenead {

// One-class embedding: strided convs bring levels 1 and 2 down to the
// stride-16 grid, the three levels are concatenated and fused into a single
// map of the deepest level's width.
template <typename T>
class FusionBottleneck {
 public:
  FusionBottleneck(std::array<int, 3> c, std::mt19937_64& rng)
      : l1_a_(c[0], c[1], 3, 2, true, rng),
        l1_b_(c[1], c[2], 3, 2, true, rng),
        l2_(c[1], c[2], 3, 2, true, rng),
        fuse_(3 * c[2], c[2], 1, 1, true, rng),
        mix_(c[2], c[2], 3, 1, true, rng) {}

  Var<T> operator()(const FeaturePyramid<T>& t, bool training) {
    auto a = l1_b_(l1_a_(t.levels[0], training), training);
    auto b = l2_(t.levels[1], training);
    auto cat = ops::concat_channels(ops::concat_channels(a, b), t.levels[2]);
    return mix_(fuse_(cat, training), training);
  }

  void collect(const std::string& prefix, nn::StateList<T>& out) {
    l1_a_.collect(nn::join(prefix, "level1_down1"), out);
    l1_b_.collect(nn::join(prefix, "level1_down2"), out);
    l2_.collect(nn::join(prefix, "level2_down"), out);
    fuse_.collect(nn::join(prefix, "fuse"), out);
    mix_.collect(nn::join(prefix, "mix"), out);
  }

 private:
  nn::ConvBn<T> l1_a_, l1_b_, l2_, fuse_, mix_;
};

// Decoder block: optional 2x bilinear upsample, then two conv+BN+ReLU.
template <typename T>
class DecoderBlock {
 public:
  DecoderBlock(int in, int out, bool upsample, std::mt19937_64& rng)
      : upsample_(upsample), a_(in, out, 3, 1, true, rng), b_(out, out, 3, 1, true, rng) {}

  Var<T> operator()(const Var<T>& x, bool training) {
    auto y = x;
    if (upsample_) y = ops::upsample_bilinear(y, x.shape()[2] * 2, x.shape()[3] * 2);
    return b_(a_(y, training), training);
  }

  void collect(const std::string& prefix, nn::StateList<T>& out) {
    a_.collect(nn::join(prefix, "conv_a"), out);
    b_.collect(nn::join(prefix, "conv_b"), out);
  }

 private:
  bool upsample_;
  nn::ConvBn<T> a_, b_;
};

// Teacher encoder, fusion bottleneck and student decoder. With attention
// modules enabled, A^1..A^3 sit after each decoder block (deepest first) and
// their output both feeds the next block and is the student's level output.
template <typename T>
class OmniADModel {
 public:
  OmniADModel(const ModelConfig& cfg, std::uint64_t student_seed) : cfg_(cfg), teacher_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(student_seed * 0xD1B54A32D192ED03ULL + 7);
    const auto c = cfg_.level_channels();
    bottleneck_ = std::make_unique<FusionBottleneck<T>>(c, rng);
    decoder_.emplace_back(c[2], c[2], false, rng);
    decoder_.emplace_back(c[2], c[1], true, rng);
    decoder_.emplace_back(c[1], c[0], true, rng);
    // Attention weights are drawn from their own stream so that the shared
    // parts are identical with and without attention for the same seed.
    std::mt19937_64 arng(student_seed * 0xA24BAED4963EE407ULL + 11);
    if (cfg_.use_attention_modules) {
      for (const auto& spec : cfg_.attention_specs())
        attention_.emplace_back(spec, cfg_.attention_widths(), arng);
    }
    if (!cfg_.backbone_weights.empty()) load_teacher_weights(cfg_.backbone_weights);
    freeze_teacher();
  }

  const ModelConfig& config() const { return cfg_; }

  // Teacher weights from a tensor archive with torchvision parameter names
  // (conv1.weight, layer1.0.bn2.running_var, ...).
  void load_teacher_weights(const std::filesystem::path& path) {
    nn::StateList<T> s;
    collect_teacher(s);
    io::load_state(s, io::load_archive(path), "teacher.");
  }

  // Frozen teacher; builds a graph only when x itself requires a gradient.
  FeaturePyramid<T> teacher_forward(const Var<T>& x) {
    check_input(x.shape());
    return teacher_(x);
  }

  Var<T> bottleneck_forward(const FeaturePyramid<T>& t, bool training) {
    return (*bottleneck_)(t, training);
  }

  // Student pyramid, ordered like the teacher (stride 4 first).
  FeaturePyramid<T> student_forward(const Var<T>& fused, bool training) {
    const auto c = cfg_.level_channels();
    const Shape& fs = fused.shape();
    if (fs.size() != 4 || static_cast<int>(fs[1]) != c[2] ||
        static_cast<int>(fs[2]) * 16 != cfg_.input_h)
      throw ShapeError("student: bottleneck output " + shape_str(fs) + " does not match config");
    std::vector<Var<T>> deep_first;
    Var<T> y = fused;
    for (std::size_t i = 0; i < decoder_.size(); ++i) {
      y = decoder_[i](y, training);
      if (!attention_.empty()) y = attention_[i](y, training, self_attention_enabled_);
      deep_first.push_back(y);
    }
    FeaturePyramid<T> out;
    out.levels.assign(deep_first.rbegin(), deep_first.rend());
    return out;
  }

  struct Forward {
    FeaturePyramid<T> teacher;
    FeaturePyramid<T> student;
  };

  Forward forward(const Var<T>& x, bool training) {
    Forward f;
    f.teacher = teacher_forward(x);
    f.student = student_forward(bottleneck_forward(f.teacher, training), training);
    return f;
  }

  // Teacher features are detached: no gradient reaches the teacher.
  Forward forward_from_teacher(const FeaturePyramid<T>& teacher, bool training) {
    Forward f;
    f.teacher = teacher;
    f.student = student_forward(bottleneck_forward(teacher, training), training);
    return f;
  }

  bool has_attention_modules() const { return !attention_.empty(); }
  StudentAttentionModule<T>& attention_module(std::size_t i) { return attention_.at(i); }

  // Sets every self-attention gate in every attention module.
  void set_attention_gates(T g) {
    for (auto& a : attention_) a.set_gates(g);
  }
  // Bypasses the self-attention layers (the U-Net convs stay).
  void set_self_attention_enabled(bool on) { self_attention_enabled_ = on; }

  void collect_teacher(nn::StateList<T>& out) { teacher_.collect("teacher", out); }

  void collect_student(nn::StateList<T>& out) {
    bottleneck_->collect("bottleneck", out);
    for (std::size_t i = 0; i < decoder_.size(); ++i)
      decoder_[i].collect("decoder.block" + std::to_string(i + 1), out);
    for (std::size_t i = 0; i < attention_.size(); ++i)
      attention_[i].collect("attention.A" + std::to_string(i + 1), out);
  }

  nn::StateList<T> state() {
    nn::StateList<T> s;
    collect_teacher(s);
    collect_student(s);
    return s;
  }

  nn::StateList<T> trainable_state() {
    nn::StateList<T> s;
    collect_student(s);
    return s;
  }

  // Teacher parameters never take part in optimisation.
  void freeze_teacher() {
    nn::StateList<T> s;
    collect_teacher(s);
    for (auto& p : s.params) p.var.set_requires_grad(false);
  }

 private:
  void check_input(const Shape& s) const {
    if (s.size() != 4 || s[1] != 3 || static_cast<int>(s[2]) != cfg_.input_h ||
        static_cast<int>(s[3]) != cfg_.input_w)
      throw ShapeError("model expects (N,3," + std::to_string(cfg_.input_h) + "," +
                       std::to_string(cfg_.input_w) + ") input, got " + shape_str(s));
  }

  ModelConfig cfg_;
  TeacherEncoder<T> teacher_;
  std::unique_ptr<FusionBottleneck<T>> bottleneck_;
  std::vector<DecoderBlock<T>> decoder_;
  std::vector<StudentAttentionModule<T>> attention_;
  bool self_attention_enabled_ = true;
};

}  // namespace scenead
