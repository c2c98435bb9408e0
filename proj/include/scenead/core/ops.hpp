#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "scenead/core/autograd.hpp"

namespace scenead::ops {

template <typename T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<MatRM<T>>;
template <typename T>
using CMapRM = Eigen::Map<const MatRM<T>>;

namespace detail {

inline void require_4d(const Shape& s, const char* op) {
  if (s.size() != 4) throw ShapeError(std::string(op) + ": expected NCHW, got " + shape_str(s));
}

inline std::size_t conv_out(std::size_t in, int k, int stride, int pad) {
  const long v = (static_cast<long>(in) + 2L * pad - k) / stride + 1;
  if (v <= 0) throw ShapeError("convolution output would be empty");
  return static_cast<std::size_t>(v);
}

// Unfolds one image channel-group into a (C*k*k) x (Ho*Wo) matrix.
template <typename T>
void im2col(const T* img, int channels, int h, int w, int k, int stride, int pad, int ho, int wo,
            T* col) {
  for (int c = 0; c < channels; ++c) {
    const T* src = img + static_cast<std::ptrdiff_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + (static_cast<std::ptrdiff_t>(c * k + ky) * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          T* row = dst + static_cast<std::ptrdiff_t>(oy) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + wo, T{0});
            continue;
          }
          const T* srow = src + static_cast<std::ptrdiff_t>(iy) * w;
          if (stride == 1) {
            const int x0 = kx - pad;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox + x0;
              row[ox] = (ix >= 0 && ix < w) ? srow[ix] : T{0};
            }
          } else {
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kx;
              row[ox] = (ix >= 0 && ix < w) ? srow[ix] : T{0};
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int channels, int h, int w, int k, int stride, int pad, int ho, int wo,
            T* img) {
  for (int c = 0; c < channels; ++c) {
    T* dst = img + static_cast<std::ptrdiff_t>(c) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + (static_cast<std::ptrdiff_t>(c * k + ky) * k + kx) * ho * wo;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const T* row = src + static_cast<std::ptrdiff_t>(oy) * wo;
          T* drow = dst + static_cast<std::ptrdiff_t>(iy) * w;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) drow[ix] += row[ox];
          }
        }
      }
    }
  }
}

}  // namespace detail

struct Conv2dParams {
  int stride = 1;
  int pad = 0;
  int groups = 1;
};

// x: (N, Cin, H, W); weight: (Cout, Cin/groups, k, k); bias: (Cout) or undefined.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, Conv2dParams p = {}) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  detail::require_4d(xs, "conv2d");
  if (ws.size() != 4 || ws[2] != ws[3]) throw ShapeError("conv2d: weight must be (Cout,Cin/g,k,k)");
  const int n = static_cast<int>(xs[0]), cin = static_cast<int>(xs[1]);
  const int h = static_cast<int>(xs[2]), w = static_cast<int>(xs[3]);
  const int cout = static_cast<int>(ws[0]), k = static_cast<int>(ws[2]);
  const int g = p.groups;
  if (cin % g != 0 || cout % g != 0 || static_cast<int>(ws[1]) * g != cin)
    throw ShapeError("conv2d: input channels " + std::to_string(cin) + " incompatible with weight " +
                     shape_str(ws));
  if (bias.defined() && (bias.shape().size() != 1 || static_cast<int>(bias.shape()[0]) != cout))
    throw ShapeError("conv2d: bias shape");
  const int ho = static_cast<int>(detail::conv_out(h, k, p.stride, p.pad));
  const int wo = static_cast<int>(detail::conv_out(w, k, p.stride, p.pad));
  const int cin_g = cin / g, cout_g = cout / g;
  const int kk = cin_g * k * k, hw_out = ho * wo;
  const bool direct = (k == 1 && p.stride == 1 && p.pad == 0);

  Tensor<T> out({static_cast<std::size_t>(n), static_cast<std::size_t>(cout),
                 static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)});
  std::vector<T> col(direct ? 0 : static_cast<std::size_t>(kk) * hw_out);
  const T* xd = x.value().data();
  const T* wd = weight.value().data();
  for (int b = 0; b < n; ++b) {
    for (int gi = 0; gi < g; ++gi) {
      const T* img = xd + (static_cast<std::ptrdiff_t>(b) * cin + gi * cin_g) * h * w;
      const T* colp = img;
      if (!direct) {
        detail::im2col(img, cin_g, h, w, k, p.stride, p.pad, ho, wo, col.data());
        colp = col.data();
      }
      MapRM<T> o(out.data() + (static_cast<std::ptrdiff_t>(b) * cout + gi * cout_g) * hw_out, cout_g,
                 hw_out);
      o.noalias() = CMapRM<T>(wd + static_cast<std::ptrdiff_t>(gi) * cout_g * kk, cout_g, kk) *
                    CMapRM<T>(colp, kk, hw_out);
      if (bias.defined()) {
        const T* bd = bias.value().data() + gi * cout_g;
        for (int c = 0; c < cout_g; ++c) o.row(c).array() += bd[c];
      }
    }
  }

  return Var<T>::make(std::move(out), {x, weight, bias.defined() ? bias : Var<T>()},
                      [=](Node<T>& self) {
                        auto& px = *self.parents[0];
                        auto& pw = *self.parents[1];
                        Node<T>* pb = self.parents.size() > 2 && self.parents[2]
                                          ? self.parents[2].get()
                                          : nullptr;
                        const T* gd = self.grad.data();
                        const T* xin = px.value.data();
                        const T* wv = pw.value.data();
                        std::vector<T> colb(direct ? 0 : static_cast<std::size_t>(kk) * hw_out);
                        std::vector<T> dcol(direct ? 0 : static_cast<std::size_t>(kk) * hw_out);
                        T* dw = pw.requires_grad ? pw.grad_or_zero().data() : nullptr;
                        T* db = (pb && pb->requires_grad) ? pb->grad_or_zero().data() : nullptr;
                        T* dx = px.requires_grad ? px.grad_or_zero().data() : nullptr;
                        for (int b = 0; b < n; ++b) {
                          for (int gi = 0; gi < g; ++gi) {
                            CMapRM<T> go(gd + (static_cast<std::ptrdiff_t>(b) * cout + gi * cout_g) *
                                                  hw_out,
                                         cout_g, hw_out);
                            const T* img =
                                xin + (static_cast<std::ptrdiff_t>(b) * cin + gi * cin_g) * h * w;
                            if (dw) {
                              const T* colp = img;
                              if (!direct) {
                                detail::im2col(img, cin_g, h, w, k, p.stride, p.pad, ho, wo,
                                               colb.data());
                                colp = colb.data();
                              }
                              MapRM<T>(dw + static_cast<std::ptrdiff_t>(gi) * cout_g * kk, cout_g,
                                       kk)
                                  .noalias() += go * CMapRM<T>(colp, kk, hw_out).transpose();
                            }
                            if (db) {
                              // plain loop: Eigen's vectorised sum depends on the buffer's alignment
                              for (int c = 0; c < cout_g; ++c) {
                                const T* r = go.data() + static_cast<std::ptrdiff_t>(c) * hw_out;
                                T s{0};
                                for (int i = 0; i < hw_out; ++i) s += r[i];
                                db[gi * cout_g + c] += s;
                              }
                            }
                            if (dx) {
                              T* dimg =
                                  dx + (static_cast<std::ptrdiff_t>(b) * cin + gi * cin_g) * h * w;
                              CMapRM<T> wm(wv + static_cast<std::ptrdiff_t>(gi) * cout_g * kk,
                                           cout_g, kk);
                              if (direct) {
                                MapRM<T>(dimg, kk, hw_out).noalias() += wm.transpose() * go;
                              } else {
                                MapRM<T>(dcol.data(), kk, hw_out).noalias() = wm.transpose() * go;
                                detail::col2im(dcol.data(), cin_g, h, w, k, p.stride, p.pad, ho, wo,
                                               dimg);
                              }
                            }
                          }
                        }
                      });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  Tensor<T> out = x.value();
  for (auto& v : out.vec()) v = v > T{0} ? v : T{0};
  return Var<T>::make(std::move(out), {x}, [](Node<T>& self) {
    auto& px = *self.parents[0];
    Tensor<T> g = self.grad;
    const T* xv = px.value.data();
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (!(xv[i] > T{0})) g[i] = T{0};
    px.accumulate(g);
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out = a.value();
  out += b.value();
  return Var<T>::make(std::move(out), {a, b}, [](Node<T>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->accumulate(self.grad);
  });
}

// x * s where s is a one-element tensor (a learnable gate).
template <typename T>
Var<T> scale_by(const Var<T>& x, const Var<T>& s) {
  if (s.value().numel() != 1) throw ShapeError("scale_by: scale must have one element");
  const T sv = s.value()[0];
  Tensor<T> out = x.value();
  out *= sv;
  return Var<T>::make(std::move(out), {x, s}, [sv](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& ps = *self.parents[1];
    if (px.requires_grad) {
      Tensor<T> g = self.grad;
      g *= sv;
      px.accumulate(g);
    }
    if (ps.requires_grad) {
      T acc{0};
      const T* gv = self.grad.data();
      const T* xv = px.value.data();
      for (std::size_t i = 0; i < self.grad.numel(); ++i) acc += gv[i] * xv[i];
      ps.grad_or_zero()[0] += acc;
    }
  });
}

// Concatenates NCHW tensors along channels.
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  detail::require_4d(as, "concat");
  detail::require_4d(bs, "concat");
  if (as[0] != bs[0] || as[2] != bs[2] || as[3] != bs[3])
    throw ShapeError("concat: " + shape_str(as) + " vs " + shape_str(bs));
  const std::size_t n = as[0], ca = as[1], cb = bs[1], hw = as[2] * as[3];
  Tensor<T> out({n, ca + cb, as[2], as[3]});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.value().data() + i * ca * hw, ca * hw, out.data() + i * (ca + cb) * hw);
    std::copy_n(b.value().data() + i * cb * hw, cb * hw, out.data() + (i * (ca + cb) + ca) * hw);
  }
  return Var<T>::make(std::move(out), {a, b}, [n, ca, cb, hw](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const T* g = self.grad.data();
    if (pa.requires_grad) {
      T* d = pa.grad_or_zero().data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < ca * hw; ++j) d[i * ca * hw + j] += g[i * (ca + cb) * hw + j];
    }
    if (pb.requires_grad) {
      T* d = pb.grad_or_zero().data();
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < cb * hw; ++j)
          d[i * cb * hw + j] += g[(i * (ca + cb) + ca) * hw + j];
    }
  });
}

template <typename T>
Var<T> max_pool2d(const Var<T>& x, int k, int stride, int pad = 0) {
  const Shape& xs = x.shape();
  detail::require_4d(xs, "max_pool2d");
  const std::size_t n = xs[0], c = xs[1];
  const int h = static_cast<int>(xs[2]), w = static_cast<int>(xs[3]);
  const int ho = static_cast<int>(detail::conv_out(h, k, stride, pad));
  const int wo = static_cast<int>(detail::conv_out(w, k, stride, pad));
  Tensor<T> out({n, c, static_cast<std::size_t>(ho), static_cast<std::size_t>(wo)});
  std::vector<std::size_t> arg(out.numel());
  const T* xv = x.value().data();
  std::size_t oi = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox, ++oi) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t bi = base;
        bool found = false;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= w) continue;
            const std::size_t idx = base + static_cast<std::size_t>(iy) * w + ix;
            if (!found || xv[idx] > best) {
              best = xv[idx];
              bi = idx;
              found = true;
            }
          }
        }
        out[oi] = best;
        arg[oi] = bi;
      }
    }
  }
  return Var<T>::make(std::move(out), {x}, [arg = std::move(arg)](Node<T>& self) {
    auto& px = *self.parents[0];
    T* d = px.grad_or_zero().data();
    const T* g = self.grad.data();
    for (std::size_t i = 0; i < arg.size(); ++i) d[arg[i]] += g[i];
  });
}

namespace detail {

struct LerpTap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

// Half-pixel-centre source taps, matching the usual align_corners=false rule.
inline std::vector<LerpTap> bilinear_taps(int in, int out) {
  std::vector<LerpTap> taps(out);
  const double scale = static_cast<double>(in) / out;
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int i0 = static_cast<int>(std::floor(src));
    if (i0 > in - 1) i0 = in - 1;
    const int i1 = std::min(i0 + 1, in - 1);
    taps[o] = {i0, i1, src - i0};
  }
  return taps;
}

}  // namespace detail

template <typename T>
Var<T> upsample_bilinear(const Var<T>& x, std::size_t out_h, std::size_t out_w) {
  const Shape& xs = x.shape();
  detail::require_4d(xs, "upsample_bilinear");
  const std::size_t planes = xs[0] * xs[1];
  const int h = static_cast<int>(xs[2]), w = static_cast<int>(xs[3]);
  if (static_cast<int>(out_h) == h && static_cast<int>(out_w) == w) return x;
  auto ty = detail::bilinear_taps(h, static_cast<int>(out_h));
  auto tx = detail::bilinear_taps(w, static_cast<int>(out_w));
  Tensor<T> out({xs[0], xs[1], out_h, out_w});
  const T* xv = x.value().data();
  T* ov = out.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const T* src = xv + p * h * w;
    T* dst = ov + p * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const auto& a = ty[oy];
      const T wy1 = static_cast<T>(a.w1), wy0 = T{1} - wy1;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const auto& b = tx[ox];
        const T wx1 = static_cast<T>(b.w1), wx0 = T{1} - wx1;
        dst[oy * out_w + ox] = wy0 * (wx0 * src[a.i0 * w + b.i0] + wx1 * src[a.i0 * w + b.i1]) +
                               wy1 * (wx0 * src[a.i1 * w + b.i0] + wx1 * src[a.i1 * w + b.i1]);
      }
    }
  }
  return Var<T>::make(std::move(out), {x}, [=](Node<T>& self) {
    auto& px = *self.parents[0];
    T* d = px.grad_or_zero().data();
    const T* g = self.grad.data();
    for (std::size_t p = 0; p < planes; ++p) {
      T* dst = d + p * h * w;
      const T* src = g + p * out_h * out_w;
      for (std::size_t oy = 0; oy < out_h; ++oy) {
        const auto& a = ty[oy];
        const T wy1 = static_cast<T>(a.w1), wy0 = T{1} - wy1;
        for (std::size_t ox = 0; ox < out_w; ++ox) {
          const auto& b = tx[ox];
          const T wx1 = static_cast<T>(b.w1), wx0 = T{1} - wx1;
          const T gv = src[oy * out_w + ox];
          dst[a.i0 * w + b.i0] += gv * wy0 * wx0;
          dst[a.i0 * w + b.i1] += gv * wy0 * wx1;
          dst[a.i1 * w + b.i0] += gv * wy1 * wx0;
          dst[a.i1 * w + b.i1] += gv * wy1 * wx1;
        }
      }
    }
  });
}

// Per-channel batch normalisation over (N, H, W). In training mode batch
// statistics are used and the running buffers are updated; otherwise the
// running buffers define a fixed affine map.
template <typename T>
struct BatchNormState {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);
};

template <typename T>
Var<T> batch_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& st,
                  bool training) {
  const Shape& xs = x.shape();
  detail::require_4d(xs, "batch_norm");
  const std::size_t n = xs[0], c = xs[1], hw = xs[2] * xs[3];
  if (gamma.value().numel() != c || beta.value().numel() != c ||
      st.running_mean.numel() != c || st.running_var.numel() != c)
    throw ShapeError("batch_norm: channel count mismatch for input " + shape_str(xs));
  const T* xv = x.value().data();
  const std::size_t m = n * hw;
  std::vector<T> mean(c), invstd(c);
  if (training) {
    if (m < 2) throw ShapeError("batch_norm: training mode needs more than one value per channel");
    for (std::size_t ch = 0; ch < c; ++ch) {
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = xv + (i * c + ch) * hw;
        for (std::size_t j = 0; j < hw; ++j) s += p[j];
      }
      const double mu = s / m;
      double v = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = xv + (i * c + ch) * hw;
        for (std::size_t j = 0; j < hw; ++j) v += (p[j] - mu) * (p[j] - mu);
      }
      const double var = v / m;
      mean[ch] = static_cast<T>(mu);
      invstd[ch] = static_cast<T>(1.0 / std::sqrt(var + st.eps));
      st.running_mean[ch] = (T{1} - st.momentum) * st.running_mean[ch] + st.momentum * mean[ch];
      st.running_var[ch] = (T{1} - st.momentum) * st.running_var[ch] +
                           st.momentum * static_cast<T>(v / (m - 1));
    }
  } else {
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = st.running_mean[ch];
      invstd[ch] = T{1} / std::sqrt(st.running_var[ch] + st.eps);
    }
  }
  Tensor<T> xhat(xs);
  Tensor<T> out(xs);
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (i * c + ch) * hw;
      for (std::size_t j = 0; j < hw; ++j) {
        const T xh = (xv[off + j] - mean[ch]) * invstd[ch];
        xhat[off + j] = xh;
        out[off + j] = gv[ch] * xh + bv[ch];
      }
    }
  return Var<T>::make(
      std::move(out), {x, gamma, beta},
      [n, c, hw, m, training, invstd = std::move(invstd), xhat = std::move(xhat)](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const T* g = self.grad.data();
        std::vector<T> sum_g(c, T{0}), sum_gx(c, T{0});
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t off = (i * c + ch) * hw;
            T sg{0}, sgx{0};
            for (std::size_t j = 0; j < hw; ++j) {
              sg += g[off + j];
              sgx += g[off + j] * xhat[off + j];
            }
            sum_g[ch] += sg;
            sum_gx[ch] += sgx;
          }
        if (pg.requires_grad) {
          T* d = pg.grad_or_zero().data();
          for (std::size_t ch = 0; ch < c; ++ch) d[ch] += sum_gx[ch];
        }
        if (pb.requires_grad) {
          T* d = pb.grad_or_zero().data();
          for (std::size_t ch = 0; ch < c; ++ch) d[ch] += sum_g[ch];
        }
        if (px.requires_grad) {
          T* d = px.grad_or_zero().data();
          const T* gam = pg.value.data();
          const T mm = static_cast<T>(m);
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t ch = 0; ch < c; ++ch) {
              const std::size_t off = (i * c + ch) * hw;
              const T scale = gam[ch] * invstd[ch];
              if (training) {
                const T mg = sum_g[ch] / mm, mgx = sum_gx[ch] / mm;
                for (std::size_t j = 0; j < hw; ++j)
                  d[off + j] += scale * (g[off + j] - mg - xhat[off + j] * mgx);
              } else {
                for (std::size_t j = 0; j < hw; ++j) d[off + j] += scale * g[off + j];
              }
            }
        }
      });
}

// Scaled dot-product attention over spatial positions, batched over N.
// q, k: (N, Cq, H, W); v: (N, Cv, H, W). Output (N, Cv, H, W) where each
// position is the softmax(q_i . k_j * scale)-weighted mix of v_j.
// The attention matrix is formed in row blocks and recomputed in the
// backward pass, so memory stays O(C * H * W + block * H * W).
template <typename T>
Var<T> spatial_attention(const Var<T>& q, const Var<T>& k, const Var<T>& v, T scale) {
  constexpr int kBlock = 64;
  const Shape& qs = q.shape();
  const Shape& vs = v.shape();
  detail::require_4d(qs, "attention");
  if (k.shape() != qs || vs[0] != qs[0] || vs[2] != qs[2] || vs[3] != qs[3])
    throw ShapeError("attention: q/k/v shapes disagree");
  const int n = static_cast<int>(qs[0]), cq = static_cast<int>(qs[1]),
            cv = static_cast<int>(vs[1]);
  const int p = static_cast<int>(qs[2] * qs[3]);

  // Softmax rows [r0, r0 + rows) into the top of `a`.
  auto attention_rows = [=](const CMapRM<T>& qm, const CMapRM<T>& km, int r0, int rows,
                            MatRM<T>& a) {
    auto blk = a.topRows(rows);
    blk.noalias() = qm.middleCols(r0, rows).transpose() * km;
    for (int i = 0; i < rows; ++i) {
      auto row = blk.row(i);
      row *= scale;
      const T mx = row.maxCoeff();
      row = (row.array() - mx).exp().matrix();
      row /= row.sum();
    }
  };

  Tensor<T> out(vs);
  MatRM<T> a(std::min(kBlock, p), p);
  MatRM<T> ot(p, cv);
  for (int b = 0; b < n; ++b) {
    CMapRM<T> qm(q.value().data() + static_cast<std::ptrdiff_t>(b) * cq * p, cq, p);
    CMapRM<T> km(k.value().data() + static_cast<std::ptrdiff_t>(b) * cq * p, cq, p);
    CMapRM<T> vm(v.value().data() + static_cast<std::ptrdiff_t>(b) * cv * p, cv, p);
    for (int r0 = 0; r0 < p; r0 += kBlock) {
      const int rows = std::min(kBlock, p - r0);
      attention_rows(qm, km, r0, rows, a);
      ot.middleRows(r0, rows).noalias() = a.topRows(rows) * vm.transpose();
    }
    MapRM<T>(out.data() + static_cast<std::ptrdiff_t>(b) * cv * p, cv, p) = ot.transpose();
  }
  return Var<T>::make(std::move(out), {q, k, v}, [=](Node<T>& self) {
    auto& pq = *self.parents[0];
    auto& pk = *self.parents[1];
    auto& pv = *self.parents[2];
    MatRM<T> a(std::min(kBlock, p), p), da(std::min(kBlock, p), p);
    MatRM<T> got(p, cv), dqt(p, cq);
    const bool need_logits = pq.requires_grad || pk.requires_grad;
    for (int b = 0; b < n; ++b) {
      const std::ptrdiff_t qo = static_cast<std::ptrdiff_t>(b) * cq * p;
      const std::ptrdiff_t vo = static_cast<std::ptrdiff_t>(b) * cv * p;
      CMapRM<T> qm(pq.value.data() + qo, cq, p);
      CMapRM<T> km(pk.value.data() + qo, cq, p);
      CMapRM<T> vm(pv.value.data() + vo, cv, p);
      CMapRM<T> go(self.grad.data() + vo, cv, p);
      got = go.transpose();
      for (int r0 = 0; r0 < p; r0 += kBlock) {
        const int rows = std::min(kBlock, p - r0);
        attention_rows(qm, km, r0, rows, a);
        auto ab = a.topRows(rows);
        if (pv.requires_grad)
          MapRM<T>(pv.grad_or_zero().data() + vo, cv, p).noalias() +=
              go.middleCols(r0, rows) * ab;
        if (!need_logits) continue;
        auto db = da.topRows(rows);
        db.noalias() = got.middleRows(r0, rows) * vm;
        for (int i = 0; i < rows; ++i) {
          const T dot = db.row(i).dot(ab.row(i));
          db.row(i) = (ab.row(i).array() * (db.row(i).array() - dot) * scale).matrix();
        }
        if (pq.requires_grad) dqt.middleRows(r0, rows).noalias() = db * km.transpose();
        if (pk.requires_grad)
          MapRM<T>(pk.grad_or_zero().data() + qo, cq, p).noalias() +=
              qm.middleCols(r0, rows) * db;
      }
      if (pq.requires_grad) MapRM<T>(pq.grad_or_zero().data() + qo, cq, p) += dqt.transpose();
    }
  });
}

// 1 - cos(a, b) between channel vectors at every (n, h, w); output (N, 1, H, W).
template <typename T>
Var<T> cosine_distance(const Var<T>& a, const Var<T>& b, T eps = T(1e-8)) {
  const Shape& as = a.shape();
  detail::require_4d(as, "cosine_distance");
  if (b.shape() != as)
    throw ShapeError("cosine_distance: " + shape_str(as) + " vs " + shape_str(b.shape()));
  const std::size_t n = as[0], c = as[1], hw = as[2] * as[3];
  Tensor<T> out({n, 1, as[2], as[3]});
  std::vector<T> na(n * hw), nb(n * hw), dots(n * hw);
  const T* av = a.value().data();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < hw; ++j) {
      T saa{0}, sbb{0}, sab{0};
      for (std::size_t ch = 0; ch < c; ++ch) {
        const T x = av[(i * c + ch) * hw + j], y = bv[(i * c + ch) * hw + j];
        saa += x * x;
        sbb += y * y;
        sab += x * y;
      }
      const std::size_t idx = i * hw + j;
      na[idx] = std::sqrt(saa);
      nb[idx] = std::sqrt(sbb);
      dots[idx] = sab;
      out[idx] = T{1} - sab / std::max(na[idx] * nb[idx], eps);
    }
  return Var<T>::make(std::move(out), {a, b}, [=](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const T* g = self.grad.data();
    const T* avv = pa.value.data();
    const T* bvv = pb.value.data();
    T* da = pa.requires_grad ? pa.grad_or_zero().data() : nullptr;
    T* db = pb.requires_grad ? pb.grad_or_zero().data() : nullptr;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < hw; ++j) {
        const std::size_t idx = i * hw + j;
        const T prod = na[idx] * nb[idx];
        const T gi = g[idx];
        if (prod > eps) {
          // d cos / d a = b / (|a||b|) - cos * a / |a|^2
          const T cosv = dots[idx] / prod;
          const T ia2 = na[idx] > T{0} ? T{1} / (na[idx] * na[idx]) : T{0};
          const T ib2 = nb[idx] > T{0} ? T{1} / (nb[idx] * nb[idx]) : T{0};
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t o = (i * c + ch) * hw + j;
            if (da) da[o] -= gi * (bvv[o] / prod - cosv * avv[o] * ia2);
            if (db) db[o] -= gi * (avv[o] / prod - cosv * bvv[o] * ib2);
          }
        } else {
          for (std::size_t ch = 0; ch < c; ++ch) {
            const std::size_t o = (i * c + ch) * hw + j;
            if (da) da[o] -= gi * bvv[o] / eps;
            if (db) db[o] -= gi * avv[o] / eps;
          }
        }
      }
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const T inv = T{1} / static_cast<T>(x.value().numel());
  double s = 0;
  for (T v : x.value().vec()) s += v;
  Tensor<T> out({1}, static_cast<T>(s) * inv);
  return Var<T>::make(std::move(out), {x}, [inv](Node<T>& self) {
    auto& px = *self.parents[0];
    px.accumulate(Tensor<T>(px.value.shape(), self.grad[0] * inv));
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, T s) {
  Tensor<T> out = x.value();
  out *= s;
  return Var<T>::make(std::move(out), {x}, [s](Node<T>& self) {
    Tensor<T> g = self.grad;
    g *= s;
    self.parents[0]->accumulate(g);
  });
}

}  // namespace scenead::ops
