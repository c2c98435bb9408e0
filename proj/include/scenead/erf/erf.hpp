#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "scenead/model/omniad.hpp"

namespace scenead::erf {

class ErfError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Location {
  std::size_t i = 0, j = 0;  // row, column in the output feature grid
  bool operator==(const Location&) const = default;
};

// Effective receptive field of one output location.
struct ErfMap {
  Location location;
  int level = 0;
  std::size_t height = 0, width = 0;
  std::vector<double> magnitude;  // normalised so the maximum is 1 (all 0 if no gradient)
  std::vector<std::uint8_t> support;
  std::size_t area = 0;
  double tau = 0.025;

  bool in_support(std::size_t y, std::size_t x) const { return support[y * width + x] != 0; }
};

// Maps an input batch (1,C,H,W) to the feature map whose locations are probed.
template <typename T>
using FeatureFn = std::function<Var<T>(const Var<T>&)>;

namespace detail {

// Sum over input channels of |d y / d x| for a unit cotangent on every
// channel of output location `loc`; `x` must already hold the graph of `y`.
template <typename T>
ErfMap from_graph(const Var<T>& x, const Var<T>& y, Location loc, int level, double tau) {
  const Shape& ys = y.shape();
  if (ys.size() != 4 || ys[0] != 1) throw ErfError("erf: feature map must be (1,C,h,w), got " + shape_str(ys));
  if (loc.i >= ys[2] || loc.j >= ys[3])
    throw ErfError("erf: location (" + std::to_string(loc.i) + "," + std::to_string(loc.j) + ") outside the " +
                   std::to_string(ys[2]) + "x" + std::to_string(ys[3]) + " grid");
  Tensor<T> seed(ys);
  for (std::size_t c = 0; c < ys[1]; ++c) seed.at(0, c, loc.i, loc.j) = T{1};
  x.zero_grad();
  backward(y, seed);

  const Shape& xs = x.shape();
  ErfMap m;
  m.location = loc;
  m.level = level;
  m.tau = tau;
  m.height = xs[2];
  m.width = xs[3];
  m.magnitude.assign(m.height * m.width, 0.0);
  if (x.has_grad()) {
    const auto& g = x.grad();
    for (std::size_t c = 0; c < xs[1]; ++c)
      for (std::size_t p = 0; p < m.height * m.width; ++p)
        m.magnitude[p] += std::abs(static_cast<double>(g[c * m.height * m.width + p]));
  }
  const double mx = *std::max_element(m.magnitude.begin(), m.magnitude.end());
  m.support.assign(m.magnitude.size(), 0);
  if (mx > 0) {
    for (std::size_t p = 0; p < m.magnitude.size(); ++p) {
      m.magnitude[p] /= mx;
      m.support[p] = m.magnitude[p] > tau;
      m.area += m.support[p];
    }
  }
  return m;
}

// Temporarily stops gradient accumulation into the model's own parameters.
template <typename T>
class FrozenParams {
 public:
  explicit FrozenParams(OmniADModel<T>& model) : state_(model.trainable_state()) {
    for (auto& p : state_.params) {
      was_.push_back(p.var.requires_grad());
      p.var.set_requires_grad(false);
    }
  }
  ~FrozenParams() {
    for (std::size_t i = 0; i < state_.params.size(); ++i) state_.params[i].var.set_requires_grad(was_[i]);
  }
  FrozenParams(const FrozenParams&) = delete;
  FrozenParams& operator=(const FrozenParams&) = delete;

 private:
  nn::StateList<T> state_;
  std::vector<bool> was_;
};

}  // namespace detail

// ERF of a generic feature function at several locations (one forward pass).
template <typename T>
std::vector<ErfMap> compute_erf(const FeatureFn<T>& f, const Tensor<T>& image, const std::vector<Location>& locs,
                                int level = 0, double tau = 0.025) {
  if (image.dim() != 4 || image.shape()[0] != 1) throw ErfError("erf: input must be a single (1,C,H,W) image");
  Var<T> x(image, true);
  auto y = f(x);
  std::vector<ErfMap> out;
  for (const auto& l : locs) out.push_back(detail::from_graph(x, y, l, level, tau));
  return out;
}

template <typename T>
ErfMap compute_erf(const FeatureFn<T>& f, const Tensor<T>& image, Location loc, int level = 0, double tau = 0.025) {
  return compute_erf(f, image, std::vector<Location>{loc}, level, tau).front();
}

// Student level output of a full model, in inference mode. `level` 0 is the
// stride-4 level.
template <typename T>
std::vector<ErfMap> compute_erf(OmniADModel<T>& model, const Tensor<T>& image, const std::vector<Location>& locs,
                                int level, double tau = 0.025) {
  if (level < 0 || level > 2) throw ErfError("erf: level must be 0, 1 or 2");
  detail::FrozenParams<T> frozen(model);
  FeatureFn<T> f = [&](const Var<T>& x) { return model.forward(x, false).student.levels[static_cast<std::size_t>(level)]; };
  return compute_erf(f, image, locs, level, tau);
}

// Uniformly drawn grid locations.
// Standardised input of a uniform 50% gray image.
template <typename T>
Tensor<T> mid_gray(const ModelConfig& c) {
  const auto h = static_cast<std::size_t>(c.input_h), w = static_cast<std::size_t>(c.input_w);
  Tensor<T> t({1, 3, h, w});
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t p = 0; p < h * w; ++p) t[ch * h * w + p] = static_cast<T>((0.5 - c.pixel_mean[ch]) / c.pixel_std[ch]);
  return t;
}

inline std::vector<Location> random_locations(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> di(0, h - 1), dj(0, w - 1);
  std::vector<Location> out;
  for (std::size_t k = 0; k < n; ++k) {
    const auto i = di(rng);
    out.push_back({i, dj(rng)});
  }
  return out;
}

struct Comparison {
  std::vector<Location> locations;
  std::vector<double> area_with, area_without;  // averaged over images
  double mean_area_with = 0, mean_area_without = 0;
  double mean_ratio = 0;  // mean_area_with / mean_area_without
  std::size_t violations = 0;  // locations where area_with < area_without

  bool broadens(double factor = 1.0) const { return mean_area_with >= factor * mean_area_without; }
};

inline Comparison summarize(std::vector<Location> locs, std::vector<double> with, std::vector<double> without) {
  Comparison c;
  c.locations = std::move(locs);
  c.area_with = std::move(with);
  c.area_without = std::move(without);
  for (std::size_t k = 0; k < c.locations.size(); ++k) {
    c.mean_area_with += c.area_with[k];
    c.mean_area_without += c.area_without[k];
    c.violations += c.area_with[k] < c.area_without[k];
  }
  const double n = static_cast<double>(std::max<std::size_t>(1, c.locations.size()));
  c.mean_area_with /= n;
  c.mean_area_without /= n;
  c.mean_ratio = c.mean_area_without > 0 ? c.mean_area_with / c.mean_area_without
                                         : (c.mean_area_with > 0 ? INFINITY : 1.0);
  return c;
}

// Generic comparison of two feature functions over a set of images.
template <typename T>
Comparison compare_erf(const FeatureFn<T>& with, const FeatureFn<T>& without, const std::vector<Tensor<T>>& images,
                       const std::vector<Location>& locs, double tau = 0.025) {
  if (images.empty()) throw ErfError("compare_erf: no images");
  std::vector<double> aw(locs.size(), 0.0), ao(locs.size(), 0.0);
  for (const auto& im : images) {
    auto mw = compute_erf(with, im, locs, 0, tau);
    auto mo = compute_erf(without, im, locs, 0, tau);
    for (std::size_t k = 0; k < locs.size(); ++k) {
      aw[k] += static_cast<double>(mw[k].area) / static_cast<double>(images.size());
      ao[k] += static_cast<double>(mo[k].area) / static_cast<double>(images.size());
    }
  }
  return summarize(locs, aw, ao);
}

// With versus without attention on two models that share the teacher,
// bottleneck and decoder. Passing the same model twice compares it against
// itself with self-attention bypassed.
template <typename T>
Comparison compare_erf(OmniADModel<T>& with, OmniADModel<T>& without, const std::vector<Tensor<T>>& images,
                       const std::vector<Location>& locs, int level, double tau = 0.025) {
  const bool same = &with == &without;
  if (!same) {
    auto a = with.config(), b = without.config();
    a.use_attention_modules = b.use_attention_modules;
    if (nlohmann::json(a) != nlohmann::json(b)) throw ErfError("compare_erf: model configs differ beyond attention");
    std::map<std::string, const Tensor<T>*> wa;
    auto sw = with.state(), so = without.state();
    for (const auto& p : sw.params) wa[p.name] = &p.var.value();
    for (const auto& p : so.params) {
      auto it = wa.find(p.name);
      if (it == wa.end() || !(*it->second == p.var.value()))
        throw ErfError("compare_erf: models do not share weights for " + p.name);
    }
  }
  if (level < 0 || level > 2) throw ErfError("erf: level must be 0, 1 or 2");
  std::vector<double> aw(locs.size(), 0.0), ao(locs.size(), 0.0);
  for (const auto& im : images) {
    if (same) with.set_self_attention_enabled(true);
    auto mw = compute_erf(with, im, locs, level, tau);
    if (same) with.set_self_attention_enabled(false);
    auto mo = compute_erf(without, im, locs, level, tau);
    if (same) with.set_self_attention_enabled(true);
    for (std::size_t k = 0; k < locs.size(); ++k) {
      aw[k] += static_cast<double>(mw[k].area) / static_cast<double>(images.size());
      ao[k] += static_cast<double>(mo[k].area) / static_cast<double>(images.size());
    }
  }
  return summarize(locs, aw, ao);
}

// ----- analytic receptive field of the conv-only path -----

// Closed index interval along one axis.
struct Span {
  int lo, hi;
  bool operator==(const Span&) const = default;
};

namespace rf {

// Input span feeding output span `s` of a k x k conv / pool layer.
inline Span conv(Span s, int k, int stride, int pad, int in_size) {
  return {std::max(0, s.lo * stride - pad), std::min(in_size - 1, s.hi * stride - pad + k - 1)};
}

inline Span upsample(Span s, int in_size, int out_size) {
  const auto taps = ops::detail::bilinear_taps(in_size, out_size);
  Span r{in_size, -1};
  for (int o = s.lo; o <= s.hi; ++o) {
    r.lo = std::min(r.lo, taps[o].i0);
    r.hi = std::max(r.hi, taps[o].i1);
  }
  return r;
}

inline Span unite(Span a, Span b) { return {std::min(a.lo, b.lo), std::max(a.hi, b.hi)}; }

// Teacher stage widths per axis: input, stem (/2), pool (/4), stage outputs.
struct TeacherGeometry {
  int input;
  std::vector<int> blocks;  // per stage
};

inline std::vector<int> stage_blocks(const ModelConfig& c) {
  if (c.backbone == BackboneKind::tiny_random) return {1, 1, 1};
  return c.backbone_depth == 101 ? std::vector<int>{3, 4, 23} : std::vector<int>{3, 4, 6};
}

// Span of teacher stage `stage` (0..2) back to the input image.
inline Span teacher_to_input(Span s, int stage, const ModelConfig& c) {
  const int h = c.input_h;
  const auto blocks = stage_blocks(c);
  const int size[3] = {h / 4, h / 8, h / 16};
  for (int st = stage; st >= 0; --st) {
    for (int b = blocks[static_cast<std::size_t>(st)] - 1; b >= 0; --b) {
      const int stride = (b == 0 && st > 0) ? 2 : 1;
      const int in = stride == 2 ? size[st - 1] : size[st];
      s = conv(s, 3, stride, 1, in);  // the 3x3 of the bottleneck block dominates the skip path
    }
  }
  s = conv(s, 3, 2, 1, h / 2);  // max pool
  return conv(s, 7, 2, 3, h);   // stem
}

// Attention module with self-attention bypassed, output span -> input span.
inline Span attention_unet(Span s, int h) {
  const int h2 = h / 2, h4 = h / 4;
  Span skip1 = conv(s, 3, 1, 1, h);  // dec2 over [up(y), skip1]
  Span y = upsample(skip1, h2, h);
  y = conv(y, 3, 1, 1, h2);          // dec1
  Span skip2 = y;
  y = upsample(y, h4, h2);
  for (int i = 0; i < 4; ++i) y = conv(y, 3, 1, 1, h4);
  y = conv(y, 2, 2, 0, h2);          // pool
  Span e2 = unite(y, skip2);
  e2 = conv(e2, 3, 1, 1, h2);        // enc2
  e2 = conv(e2, 2, 2, 0, h);         // pool
  Span e1 = unite(e2, skip1);
  return conv(e1, 3, 1, 1, h);       // enc1
}

}  // namespace rf

// Box (rows, cols) of input pixels that can influence student level `level`
// at `loc` through convolutions, pooling and upsampling alone. Valid for
// models without attention modules, or with self-attention bypassed.
inline std::pair<Span, Span> receptive_box(const ModelConfig& c, int level, Location loc) {
  if (level < 0 || level > 2) throw ErfError("receptive_box: level must be 0, 1 or 2");
  const int h = c.input_h;
  const int lsize[3] = {h / 4, h / 8, h / 16};
  const bool att = c.use_attention_modules;
  auto axis = [&](int idx) {
    Span s{idx, idx};
    // decoder blocks from `level` back to the deepest one
    for (int l = level; l <= 2; ++l) {
      if (att) s = rf::attention_unet(s, lsize[l]);
      s = rf::conv(s, 3, 1, 1, lsize[l]);
      s = rf::conv(s, 3, 1, 1, lsize[l]);
      if (l < 2) s = rf::upsample(s, lsize[l + 1], lsize[l]);
    }
    // fusion: mix 3x3, fuse 1x1, then the three teacher branches
    s = rf::conv(s, 3, 1, 1, lsize[2]);
    Span from3 = rf::teacher_to_input(s, 2, c);
    Span b2 = rf::conv(s, 3, 2, 1, lsize[1]);
    Span from2 = rf::teacher_to_input(b2, 1, c);
    Span b1 = rf::conv(rf::conv(s, 3, 2, 1, h / 8), 3, 2, 1, lsize[0]);
    Span from1 = rf::teacher_to_input(b1, 0, c);
    return rf::unite(rf::unite(from1, from2), from3);
  };
  return {axis(static_cast<int>(loc.i)), axis(static_cast<int>(loc.j))};
}

inline bool support_within(const ErfMap& m, std::pair<Span, Span> box) {
  for (std::size_t y = 0; y < m.height; ++y)
    for (std::size_t x = 0; x < m.width; ++x)
      if (m.in_support(y, x) && (static_cast<int>(y) < box.first.lo || static_cast<int>(y) > box.first.hi ||
                                 static_cast<int>(x) < box.second.lo || static_cast<int>(x) > box.second.hi))
        return false;
  return true;
}

inline nlohmann::json to_json(const Comparison& c) {
  nlohmann::json locs = nlohmann::json::array();
  for (const auto& l : c.locations) locs.push_back({l.i, l.j});
  return {{"locations", locs},          {"area_with", c.area_with},
          {"area_without", c.area_without}, {"mean_area_with", c.mean_area_with},
          {"mean_area_without", c.mean_area_without}, {"mean_ratio", c.mean_ratio},
          {"violations", c.violations},  {"broadens", c.broadens()}};
}

}  // namespace scenead::erf
