#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "scenead/core/ops.hpp"

namespace scenead::nn {

template <typename T>
struct ParamRef {
  std::string name;
  Var<T> var;
};

template <typename T>
struct BufferRef {
  std::string name;
  Tensor<T>* tensor;
};

// Flat, ordered view of a module tree's learnable parameters and buffers.
template <typename T>
struct StateList {
  std::vector<ParamRef<T>> params;
  std::vector<BufferRef<T>> buffers;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += p.var.value().numel();
    return n;
  }
};

inline std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <typename T>
Tensor<T> he_normal(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  for (auto& v : t.vec()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in, int out, int k, ops::Conv2dParams p, bool bias, std::mt19937_64& rng)
      : p_(p) {
    const std::size_t fan_in = static_cast<std::size_t>(in / p.groups) * k * k;
    w_ = Var<T>(he_normal<T>({static_cast<std::size_t>(out), static_cast<std::size_t>(in / p.groups),
                              static_cast<std::size_t>(k), static_cast<std::size_t>(k)},
                             fan_in, rng),
                true);
    if (bias) b_ = Var<T>(Tensor<T>({static_cast<std::size_t>(out)}), true);
  }

  Var<T> operator()(const Var<T>& x) const { return ops::conv2d(x, w_, b_, p_); }

  void collect(const std::string& prefix, StateList<T>& out) const {
    out.params.push_back({join(prefix, "weight"), w_});
    if (b_.defined()) out.params.push_back({join(prefix, "bias"), b_});
  }

  int out_channels() const { return static_cast<int>(w_.shape()[0]); }
  const Var<T>& weight() const { return w_; }

 private:
  Var<T> w_, b_;
  ops::Conv2dParams p_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int c) {
    const auto n = static_cast<std::size_t>(c);
    gamma_ = Var<T>(Tensor<T>::ones({n}), true);
    beta_ = Var<T>(Tensor<T>({n}), true);
    st_.running_mean = Tensor<T>({n});
    st_.running_var = Tensor<T>::ones({n});
  }

  Var<T> operator()(const Var<T>& x, bool training) {
    return ops::batch_norm(x, gamma_, beta_, st_, training);
  }

  void collect(const std::string& prefix, StateList<T>& out) {
    out.params.push_back({join(prefix, "weight"), gamma_});
    out.params.push_back({join(prefix, "bias"), beta_});
    out.buffers.push_back({join(prefix, "running_mean"), &st_.running_mean});
    out.buffers.push_back({join(prefix, "running_var"), &st_.running_var});
  }

 private:
  Var<T> gamma_, beta_;
  ops::BatchNormState<T> st_;
};

// conv3x3 (no bias) + BN, optionally followed by ReLU.
template <typename T>
class ConvBn {
 public:
  ConvBn() = default;
  ConvBn(int in, int out, int k, int stride, bool relu, std::mt19937_64& rng, int groups = 1)
      : conv_(in, out, k, {stride, k / 2, groups}, false, rng), bn_(out), relu_(relu) {}

  Var<T> operator()(const Var<T>& x, bool training) {
    auto y = bn_(conv_(x), training);
    return relu_ ? ops::relu(y) : y;
  }

  void collect(const std::string& prefix, StateList<T>& out) {
    conv_.collect(join(prefix, "conv"), out);
    bn_.collect(join(prefix, "bn"), out);
  }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
  bool relu_ = true;
};

// Non-local spatial self-attention with a zero-initialised residual gate:
// y = x + gate * attend(q(x), k(x), v(x)).
template <typename T>
class SelfAttention2d {
 public:
  SelfAttention2d() = default;
  SelfAttention2d(int channels, std::mt19937_64& rng) {
    const int cq = std::max(1, channels / 8);
    q_ = Conv2d<T>(channels, cq, 1, {}, true, rng);
    k_ = Conv2d<T>(channels, cq, 1, {}, true, rng);
    v_ = Conv2d<T>(channels, channels, 1, {}, true, rng);
    gate_ = Var<T>(Tensor<T>({1}), true);
    scale_ = static_cast<T>(1.0 / std::sqrt(static_cast<double>(cq)));
  }

  Var<T> operator()(const Var<T>& x, bool enabled = true) const {
    if (!enabled) return x;
    auto attended = ops::spatial_attention(q_(x), k_(x), v_(x), scale_);
    return ops::add(x, ops::scale_by(attended, gate_));
  }

  void set_gate(T g) { gate_.mutable_value()[0] = g; }
  T gate() const { return gate_.value()[0]; }

  void collect(const std::string& prefix, StateList<T>& out) const {
    q_.collect(join(prefix, "query"), out);
    k_.collect(join(prefix, "key"), out);
    v_.collect(join(prefix, "value"), out);
    out.params.push_back({join(prefix, "gate"), gate_});
  }

 private:
  Conv2d<T> q_, k_, v_;
  Var<T> gate_;
  T scale_{1};
};

}  // namespace scenead::nn
