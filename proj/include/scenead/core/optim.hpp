#pragma once

#include <cmath>
#include <vector>

#include "scenead/core/autograd.hpp"

namespace scenead {

// Adam with bias correction; parameters without a gradient are skipped.
template <typename T>
class Adam {
 public:
  struct Options {
    double lr = 0.005;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
  };

  Adam(std::vector<Var<T>> params, Options opt) : params_(std::move(params)), opt_(opt) {
    for (const auto& p : params_) {
      m_.emplace_back(p.value().shape());
      v_.emplace_back(p.value().shape());
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
    const double step_size = opt_.lr / bc1;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (p.grad().empty()) continue;
      const T* g = p.grad().data();
      T* w = p.mutable_value().data();
      T* m = m_[i].data();
      T* v = v_[i].data();
      const std::size_t n = p.value().numel();
      for (std::size_t j = 0; j < n; ++j) {
        m[j] = static_cast<T>(opt_.beta1 * m[j] + (1 - opt_.beta1) * g[j]);
        v[j] = static_cast<T>(opt_.beta2 * v[j] + (1 - opt_.beta2) * g[j] * g[j]);
        w[j] -= static_cast<T>(step_size * m[j] / (std::sqrt(v[j] / bc2) + opt_.eps));
      }
    }
  }

  long steps() const { return t_; }

 private:
  std::vector<Var<T>> params_;
  Options opt_;
  std::vector<Tensor<T>> m_, v_;
  long t_ = 0;
};

}  // namespace scenead
