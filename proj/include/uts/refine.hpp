#pragma once

// Mask refinement: separable windowed mean, nearest-palette discretization,
// alpha blend onto the source image.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "uts/error.hpp"
#include "uts/image.hpp"
#include "uts/mask.hpp"

namespace uts {

// Multiply-add accounting for the complexity claim: accumulate_ops counts
// every sample folded into a window sum, across both passes and all three
// channels.
struct SmoothStats {
  uint64_t accumulate_ops = 0;
  int64_t pixels = 0;
  int window = 0;

  double ops_per_pixel_channel() const {
    return pixels > 0 ? static_cast<double>(accumulate_ops) / (static_cast<double>(pixels) * 3.0)
                      : 0.0;
  }
};

// One horizontal then one vertical clamped-window mean per channel. The
// window spans [-floor(w/2), -floor(w/2)+w-1] around each pixel (for w=48
// that is [-24,+23]); each 1-D pass divides by its own in-bounds sample
// count, which makes the two passes together equal the direct 2-D mean
// over the clamped rectangle.
inline ColorMask smooth_separable(const ColorMask& mask, int window = 48,
                                  SmoothStats* stats = nullptr) {
  if (mask.state != MaskState::raw)
    throw std::logic_error("smooth_separable: mask already processed");
  if (window < 1) throw InputError("smoothing window must be >= 1");
  if (window > mask.width && window > mask.height)
    throw InputError("smoothing window " + std::to_string(window) + " larger than both " +
                     std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                     " mask dimensions");
  const int w = mask.width, h = mask.height;
  const int lo = -(window / 2), hi = -(window / 2) + window - 1;

  SmoothStats local;
  local.window = window;
  local.pixels = static_cast<int64_t>(w) * h;

  ColorMask mid(w, h, MaskState::smoothed);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x + lo), x1 = std::min(w - 1, x + hi);
      double s0 = 0, s1 = 0, s2 = 0;
      for (int xx = x0; xx <= x1; ++xx) {
        s0 += mask.at(xx, y, 0);
        s1 += mask.at(xx, y, 1);
        s2 += mask.at(xx, y, 2);
      }
      local.accumulate_ops += static_cast<uint64_t>(x1 - x0 + 1) * 3;
      const double n = x1 - x0 + 1;
      mid.at(x, y, 0) = s0 / n;
      mid.at(x, y, 1) = s1 / n;
      mid.at(x, y, 2) = s2 / n;
    }

  ColorMask out(w, h, MaskState::smoothed);
  for (int x = 0; x < w; ++x)
    for (int y = 0; y < h; ++y) {
      const int y0 = std::max(0, y + lo), y1 = std::min(h - 1, y + hi);
      double s0 = 0, s1 = 0, s2 = 0;
      for (int yy = y0; yy <= y1; ++yy) {
        s0 += mid.at(x, yy, 0);
        s1 += mid.at(x, yy, 1);
        s2 += mid.at(x, yy, 2);
      }
      local.accumulate_ops += static_cast<uint64_t>(y1 - y0 + 1) * 3;
      const double n = y1 - y0 + 1;
      out.at(x, y, 0) = s0 / n;
      out.at(x, y, 1) = s1 / n;
      out.at(x, y, 2) = s2 / n;
    }

  if (stats) *stats = local;
  return out;
}

struct DiscretizeOptions {
  bool black_class = false;                    // treat black as a fourth target
  const std::vector<uint8_t>* frozen = nullptr;  // per-pixel: keep black, skip search
};

// Nearest palette color per pixel; exact-distance ties go to the lowest
// class index. Accepts any mask state (so discretize is idempotent).
inline ColorMask discretize(const ColorMask& mask, const Palette& palette = default_palette(),
                            const DiscretizeOptions& opt = {}) {
  if (opt.frozen && opt.frozen->size() != static_cast<size_t>(mask.width) * mask.height)
    throw std::invalid_argument("discretize: frozen map size mismatch");
  ColorMask out(mask.width, mask.height, MaskState::discrete);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      if (opt.frozen && (*opt.frozen)[static_cast<size_t>(y) * mask.width + x]) continue;
      const double r = mask.at(x, y, 0), g = mask.at(x, y, 1), b = mask.at(x, y, 2);
      int best = 0;
      double best_d = -1.0;
      const int candidates = kNumClasses + (opt.black_class ? 1 : 0);
      for (int c = 0; c < candidates; ++c) {
        const Rgb col = c < kNumClasses ? palette.colors[static_cast<size_t>(c)] : Rgb{0, 0, 0};
        const double dr = r - col.r, dg = g - col.g, db = b - col.b;
        const double d = dr * dr + dg * dg + db * db;
        if (best_d < 0.0 || d < best_d) {
          best_d = d;
          best = c;
        }
      }
      const Rgb col =
          best < kNumClasses ? palette.colors[static_cast<size_t>(best)] : Rgb{0, 0, 0};
      out.at(x, y, 0) = col.r;
      out.at(x, y, 1) = col.g;
      out.at(x, y, 2) = col.b;
    }
  return out;
}

// Per-channel blend round(alpha*mask + (1-alpha)*image), halves away from
// zero, clamped to [0,255].
inline RgbImage overlay(const ColorMask& s_d, const RgbImage& image, double alpha = 0.5) {
  if (s_d.state != MaskState::discrete)
    throw std::logic_error("overlay: mask must be discretized first");
  if (alpha < 0.0 || alpha > 1.0)
    throw InputError("alpha must be in [0,1], got " + std::to_string(alpha));
  if (s_d.width != image.width || s_d.height != image.height)
    throw InputError("overlay: mask " + std::to_string(s_d.width) + "x" +
                     std::to_string(s_d.height) + " vs image " + std::to_string(image.width) +
                     "x" + std::to_string(image.height));
  RgbImage out(image.width, image.height);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      const Rgb src = image.get(x, y);
      const double ch[3] = {alpha * s_d.at(x, y, 0) + (1.0 - alpha) * src.r,
                            alpha * s_d.at(x, y, 1) + (1.0 - alpha) * src.g,
                            alpha * s_d.at(x, y, 2) + (1.0 - alpha) * src.b};
      Rgb o;
      uint8_t* dst[3] = {&o.r, &o.g, &o.b};
      for (int c = 0; c < 3; ++c) {
        long v = std::lround(ch[c]);  // rounds halves away from zero
        if (v < 0) v = 0;
        if (v > 255) v = 255;
        *dst[c] = static_cast<uint8_t>(v);
      }
      out.set(x, y, o);
    }
  return out;
}

struct RefineOptions {
  int window = 48;
  double alpha = 0.5;
  bool freeze_excluded = false;
  bool black_class = false;
};

struct RefineResult {
  ColorMask smoothed;
  ColorMask discrete;
  RgbImage overlaid;
  SmoothStats stats;
  double direct_ops_per_pixel = 0.0;  // what the naive 2-D mean would cost
};

inline RefineResult refine_pipeline(const ColorMask& raw, const RgbImage& image,
                                    const Palette& palette = default_palette(),
                                    const RefineOptions& opt = {}) {
  std::vector<uint8_t> frozen;
  if (opt.freeze_excluded) {
    frozen.resize(static_cast<size_t>(raw.width) * raw.height);
    for (int y = 0; y < raw.height; ++y)
      for (int x = 0; x < raw.width; ++x)
        frozen[static_cast<size_t>(y) * raw.width + x] = raw.is_black(x, y) ? 1 : 0;
  }
  RefineResult res;
  res.smoothed = smooth_separable(raw, opt.window, &res.stats);
  DiscretizeOptions dopt;
  dopt.black_class = opt.black_class;
  dopt.frozen = opt.freeze_excluded ? &frozen : nullptr;
  res.discrete = discretize(res.smoothed, palette, dopt);
  res.overlaid = overlay(res.discrete, image, opt.alpha);
  res.direct_ops_per_pixel = static_cast<double>(opt.window) * opt.window;
  return res;
}

}  // namespace uts
