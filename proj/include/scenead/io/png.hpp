#pragma once

#include <png.h>

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "scenead/io/files.hpp"

namespace scenead::io {

// Interleaved 8-bit image, 1 (gray) or 3 (RGB) channels.
struct Image8 {
  int width = 0, height = 0, channels = 3;
  std::vector<std::uint8_t> pixels;

  Image8() = default;
  Image8(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c), pixels(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int y, int x, int c = 0) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int y, int x, int c = 0) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool operator==(const Image8&) const = default;
};

struct PngHeader {
  int width = 0, height = 0;
};

inline PngHeader read_png_header(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IoError("unreadable PNG " + path.string() + ": " + img.message);
  PngHeader h{static_cast<int>(img.width), static_cast<int>(img.height)};
  png_image_free(&img);
  return h;
}

// Decodes any PNG into 8-bit gray (channels=1) or RGB (channels=3); alpha is
// composited away and 16-bit input is reduced.
inline Image8 read_png(const fs::path& path, int channels = 3) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str()))
    throw IoError("unreadable PNG " + path.string() + ": " + img.message);
  img.format = channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  Image8 out(static_cast<int>(img.width), static_cast<int>(img.height), channels);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw IoError("failed to decode PNG " + path.string() + ": " + msg);
  }
  return out;
}

inline void write_png(const fs::path& path, const Image8& im) {
  if (im.channels != 1 && im.channels != 3) throw IoError("write_png: need 1 or 3 channels");
  atomic_write(path, [&](const fs::path& tmp) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(im.width);
    img.height = static_cast<png_uint_32>(im.height);
    img.format = im.channels == 1 ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    if (!png_image_write_to_file(&img, tmp.c_str(), 0, im.pixels.data(), 0, nullptr))
      throw IoError("failed to write PNG " + path.string() + ": " + img.message);
  });
}

}  // namespace scenead::io
