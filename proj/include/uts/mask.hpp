#pragma once

// Shared class palette and the color-mask container that flows through
// assemble -> smooth -> discretize -> overlay.

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "uts/image.hpp"

namespace uts {

inline constexpr int kNumClasses = 3;
inline constexpr int kClassTumor = 0;
inline constexpr int kClassStroma = 1;
inline constexpr int kClassFat = 2;

struct Palette {
  std::array<Rgb, kNumClasses> colors{Rgb{255, 0, 0}, Rgb{0, 255, 0}, Rgb{255, 255, 0}};
  std::array<const char*, kNumClasses> names{"tumor", "stroma", "fat"};
};

inline const Palette& default_palette() {
  static const Palette p;
  return p;
}

inline int class_index_by_name(const std::string& name) {
  const Palette& p = default_palette();
  for (int c = 0; c < kNumClasses; ++c)
    if (name == p.names[static_cast<size_t>(c)]) return c;
  throw std::invalid_argument("unknown class name '" + name + "'");
}

// raw: exact palette colors / black. smoothed: reals. discrete: palette
// colors again (plus black under the freeze/black-class options).
enum class MaskState { raw, smoothed, discrete };

struct ColorMask {
  int width = 0, height = 0;
  std::vector<double> pixels;  // RGB interleaved
  MaskState state = MaskState::raw;

  ColorMask() = default;
  ColorMask(int w, int h, MaskState s = MaskState::raw) : width(w), height(h), state(s) {
    if (w < 1 || h < 1)
      throw std::invalid_argument("ColorMask: bad size " + std::to_string(w) + "x" +
                                  std::to_string(h));
    pixels.assign(static_cast<size_t>(w) * h * 3, 0.0);
  }

  double& at(int x, int y, int ch) { return pixels[idx(x, y, ch)]; }
  double at(int x, int y, int ch) const { return pixels[idx(x, y, ch)]; }

  bool is_black(int x, int y) const {
    return at(x, y, 0) == 0.0 && at(x, y, 1) == 0.0 && at(x, y, 2) == 0.0;
  }

  static ColorMask from_image(const RgbImage& img) {
    ColorMask m(img.width, img.height, MaskState::raw);
    for (size_t i = 0; i < img.pixels.size(); ++i) m.pixels[i] = img.pixels[i];
    return m;
  }

  // Only exactly-representable states go back to 8-bit.
  RgbImage to_image() const {
    if (state == MaskState::smoothed)
      throw std::logic_error("ColorMask::to_image: smoothed masks hold reals; discretize first");
    RgbImage img(width, height);
    for (size_t i = 0; i < pixels.size(); ++i)
      img.pixels[i] = static_cast<uint8_t>(pixels[i]);
    return img;
  }

 private:
  size_t idx(int x, int y, int ch) const {
    if (x < 0 || x >= width || y < 0 || y >= height || ch < 0 || ch > 2)
      throw std::out_of_range("ColorMask: (" + std::to_string(x) + "," + std::to_string(y) +
                              ") ch " + std::to_string(ch) + " outside " + std::to_string(width) +
                              "x" + std::to_string(height));
    return (static_cast<size_t>(y) * width + x) * 3 + static_cast<size_t>(ch);
  }
};

}  // namespace uts
