#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "scenead/core/tensor.hpp"
#include "scenead/io/png.hpp"

namespace scenead::data {

enum class ImageSource { captured, synthesized };

inline std::string to_string(ImageSource s) { return s == ImageSource::captured ? "captured" : "synthesized"; }

// 3xHxW RGB, values in [0, 1].
struct ImageTensor {
  Tensor<float> data;
  ImageSource source = ImageSource::captured;

  int height() const { return static_cast<int>(data.shape()[1]); }
  int width() const { return static_cast<int>(data.shape()[2]); }
};

inline void validate(const ImageTensor& im) {
  const auto& s = im.data.shape();
  if (s.size() != 3 || s[0] != 3 || s[1] == 0 || s[2] == 0)
    throw ShapeError("image tensor must be 3xHxW, got " + shape_str(s));
  if (!im.data.all_finite()) throw std::invalid_argument("image tensor has non-finite values");
}

inline ImageTensor from_image8(const io::Image8& im, ImageSource src = ImageSource::captured) {
  if (im.channels != 3) throw ShapeError("expected an RGB image");
  ImageTensor t{Tensor<float>({3, static_cast<std::size_t>(im.height), static_cast<std::size_t>(im.width)}), src};
  const std::size_t hw = static_cast<std::size_t>(im.height) * im.width;
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < 3; ++c) t.data[c * hw + i] = im.pixels[i * 3 + c] / 255.0f;
  return t;
}

inline io::Image8 to_image8(const ImageTensor& t) {
  validate(t);
  io::Image8 im(t.width(), t.height(), 3);
  const std::size_t hw = static_cast<std::size_t>(t.height()) * t.width();
  for (std::size_t i = 0; i < hw; ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(t.data[c * hw + i], 0.0f, 1.0f);
      im.pixels[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  return im;
}

inline ImageTensor load_image(const io::fs::path& p, ImageSource src = ImageSource::captured) {
  return from_image8(io::read_png(p, 3), src);
}

// (x - mean) / std per channel, written into batch slot n of an (N,3,H,W) tensor.
template <typename T>
void normalize_into(const ImageTensor& im, const std::array<double, 3>& mean,
                    const std::array<double, 3>& stdev, Tensor<T>& batch, std::size_t n) {
  const auto& s = batch.shape();
  if (s.size() != 4 || s[1] != 3 || static_cast<int>(s[2]) != im.height() ||
      static_cast<int>(s[3]) != im.width() || n >= s[0])
    throw ShapeError("normalize_into: image " + shape_str(im.data.shape()) + " does not fit batch " + shape_str(s));
  const std::size_t hw = s[2] * s[3];
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < hw; ++i)
      batch[(n * 3 + c) * hw + i] = static_cast<T>((im.data[c * hw + i] - mean[c]) / stdev[c]);
}

// Bilinear (half-pixel) resize of an image tensor.
inline ImageTensor resize(const ImageTensor& im, int out_h, int out_w) {
  if (im.height() == out_h && im.width() == out_w) return im;
  ImageTensor out{Tensor<float>({3, static_cast<std::size_t>(out_h), static_cast<std::size_t>(out_w)}), im.source};
  const int ih = im.height(), iw = im.width();
  const float sy = static_cast<float>(ih) / out_h, sx = static_cast<float>(iw) / out_w;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < out_h; ++y) {
      const float fy = std::max(0.0f, (y + 0.5f) * sy - 0.5f);
      const int y0 = std::min(static_cast<int>(fy), ih - 1), y1 = std::min(y0 + 1, ih - 1);
      const float wy = fy - y0;
      for (int x = 0; x < out_w; ++x) {
        const float fx = std::max(0.0f, (x + 0.5f) * sx - 0.5f);
        const int x0 = std::min(static_cast<int>(fx), iw - 1), x1 = std::min(x0 + 1, iw - 1);
        const float wx = fx - x0;
        auto px = [&](int yy, int xx) { return im.data[(static_cast<std::size_t>(c) * ih + yy) * iw + xx]; };
        out.data[(static_cast<std::size_t>(c) * out_h + y) * out_w + x] =
            (1 - wy) * ((1 - wx) * px(y0, x0) + wx * px(y0, x1)) + wy * ((1 - wx) * px(y1, x0) + wx * px(y1, x1));
      }
    }
  return out;
}

}  // namespace scenead::data
