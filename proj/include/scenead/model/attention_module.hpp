#pragma once

#include <array>
#include <random>
#include <utility>

#include "scenead/core/nn.hpp"
#include "scenead/model/config.hpp"

namespace scenead {

// Student attention module: a small U-Net whose encoder and bottleneck stages
// carry spatial self-attention. Shape preserving, (C, H, H) -> (C, H, H).
//
//   enc1: conv3x3 C->w1, SA(w1)                 -> skip1, maxpool
//   enc2: conv3x3 w1->w2, SA(w2)                -> skip2, maxpool
//   mid:  [conv3x3+BN+ReLU, SA] x3 at w3, conv3x3+BN w3->w2
//   dec1: upsample to H/2, concat skip2, conv3x3 2*w2->w1
//   dec2: upsample to H,   concat skip1, conv3x3 2*w1->C
//
// w1, w2, w3 are 64, 128, 256 at full width.
template <typename T>
class StudentAttentionModule {
 public:
  StudentAttentionModule(AttentionSpec spec, std::array<int, 3> widths, std::mt19937_64& rng)
      : spec_(spec) {
    const auto [w1, w2, w3] = widths;
    enc1_ = nn::Conv2d<T>(spec.c_in, w1, 3, {1, 1, 1}, true, rng);
    sa1_ = nn::SelfAttention2d<T>(w1, rng);
    enc2_ = nn::Conv2d<T>(w1, w2, 3, {1, 1, 1}, true, rng);
    sa2_ = nn::SelfAttention2d<T>(w2, rng);
    mid1_ = nn::ConvBn<T>(w2, w3, 3, 1, true, rng);
    sa3_ = nn::SelfAttention2d<T>(w3, rng);
    mid2_ = nn::ConvBn<T>(w3, w3, 3, 1, true, rng);
    sa4_ = nn::SelfAttention2d<T>(w3, rng);
    mid3_ = nn::ConvBn<T>(w3, w3, 3, 1, true, rng);
    sa5_ = nn::SelfAttention2d<T>(w3, rng);
    mid4_ = nn::ConvBn<T>(w3, w2, 3, 1, false, rng);
    dec1_ = nn::Conv2d<T>(2 * w2, w1, 3, {1, 1, 1}, true, rng);
    dec2_ = nn::Conv2d<T>(2 * w1, spec.c_out, 3, {1, 1, 1}, true, rng);
  }

  // Output shape after every layer, in table order (conv, attention, pool, ...).
  struct Trace {
    std::vector<Shape> stages;
  };

  Var<T> operator()(const Var<T>& x, bool training, bool self_attention = true,
                    Trace* trace = nullptr) {
    const Shape& xs = x.shape();
    if (xs.size() != 4 || static_cast<int>(xs[1]) != spec_.c_in ||
        static_cast<int>(xs[2]) != spec_.h_in || static_cast<int>(xs[3]) != spec_.h_in)
      throw ShapeError("attention module expects (N," + std::to_string(spec_.c_in) + "," +
                       std::to_string(spec_.h_in) + "," + std::to_string(spec_.h_in) + "), got " +
                       shape_str(xs));
    auto note = [trace](const Var<T>& v) {
      if (trace) trace->stages.push_back(v.shape());
    };
    const bool sa = self_attention;
    auto y = enc1_(x);
    note(y);
    auto skip1 = sa1_(y, sa);
    note(skip1);
    y = ops::max_pool2d(skip1, 2, 2);
    note(y);
    y = enc2_(y);
    note(y);
    auto skip2 = sa2_(y, sa);
    note(skip2);
    y = ops::max_pool2d(skip2, 2, 2);
    note(y);
    using Mid = std::pair<nn::ConvBn<T>*, nn::SelfAttention2d<T>*>;
    for (auto [conv, attn] : std::array<Mid, 3>{{{&mid1_, &sa3_}, {&mid2_, &sa4_}, {&mid3_, &sa5_}}}) {
      y = (*conv)(y, training);
      note(y);
      y = (*attn)(y, sa);
      note(y);
    }
    y = mid4_(y, training);
    note(y);
    y = ops::upsample_bilinear(y, skip2.shape()[2], skip2.shape()[3]);
    note(y);
    y = dec1_(ops::concat_channels(y, skip2));
    note(y);
    y = ops::upsample_bilinear(y, skip1.shape()[2], skip1.shape()[3]);
    note(y);
    y = dec2_(ops::concat_channels(y, skip1));
    note(y);
    return y;
  }

  void set_gates(T g) {
    for (auto* s : {&sa1_, &sa2_, &sa3_, &sa4_, &sa5_}) s->set_gate(g);
  }

  const AttentionSpec& spec() const { return spec_; }

  void collect(const std::string& prefix, nn::StateList<T>& out) {
    enc1_.collect(nn::join(prefix, "enc1"), out);
    sa1_.collect(nn::join(prefix, "enc1_attn"), out);
    enc2_.collect(nn::join(prefix, "enc2"), out);
    sa2_.collect(nn::join(prefix, "enc2_attn"), out);
    mid1_.collect(nn::join(prefix, "mid1"), out);
    sa3_.collect(nn::join(prefix, "mid1_attn"), out);
    mid2_.collect(nn::join(prefix, "mid2"), out);
    sa4_.collect(nn::join(prefix, "mid2_attn"), out);
    mid3_.collect(nn::join(prefix, "mid3"), out);
    sa5_.collect(nn::join(prefix, "mid3_attn"), out);
    mid4_.collect(nn::join(prefix, "mid4"), out);
    dec1_.collect(nn::join(prefix, "dec1"), out);
    dec2_.collect(nn::join(prefix, "dec2"), out);
  }

 private:
  AttentionSpec spec_;
  nn::Conv2d<T> enc1_, enc2_, dec1_, dec2_;
  nn::SelfAttention2d<T> sa1_, sa2_, sa3_, sa4_, sa5_;
  nn::ConvBn<T> mid1_, mid2_, mid3_, mid4_;
};

}  // namespace scenead
