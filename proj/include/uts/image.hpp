#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "uts/tensor.hpp"

namespace uts {

struct Rgb {
  uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

// Interleaved 8-bit RGB, row-major from the top-left corner.
struct RgbImage {
  int width = 0, height = 0;
  std::vector<uint8_t> pixels;

  RgbImage() = default;
  RgbImage(int w, int h, Rgb fill = {0, 0, 0}) : width(w), height(h) {
    if (w < 1 || h < 1)
      throw std::invalid_argument("RgbImage: bad size " + std::to_string(w) + "x" +
                                  std::to_string(h));
    pixels.resize(static_cast<size_t>(w) * h * 3);
    for (size_t i = 0; i < pixels.size(); i += 3) {
      pixels[i] = fill.r;
      pixels[i + 1] = fill.g;
      pixels[i + 2] = fill.b;
    }
  }

  size_t offset(int x, int y) const {
    if (x < 0 || x >= width || y < 0 || y >= height)
      throw std::out_of_range("RgbImage: pixel (" + std::to_string(x) + "," + std::to_string(y) +
                              ") outside " + std::to_string(width) + "x" + std::to_string(height));
    return (static_cast<size_t>(y) * width + x) * 3;
  }

  Rgb get(int x, int y) const {
    const size_t o = offset(x, y);
    return {pixels[o], pixels[o + 1], pixels[o + 2]};
  }

  void set(int x, int y, Rgb c) {
    const size_t o = offset(x, y);
    pixels[o] = c.r;
    pixels[o + 1] = c.g;
    pixels[o + 2] = c.b;
  }

  bool operator==(const RgbImage&) const = default;
};

// Crop to HWC doubles in [0,1]. The caller guarantees the window fits.
inline Tensor image_window_to_tensor(const RgbImage& img, int x0, int y0, int w, int h) {
  Tensor t({h, w, 3});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Rgb c = img.get(x0 + x, y0 + y);
      t.at(y, x, 0) = c.r / 255.0;
      t.at(y, x, 1) = c.g / 255.0;
      t.at(y, x, 2) = c.b / 255.0;
    }
  return t;
}

}  // namespace uts
