#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "uts/refine.hpp"
#include "uts/rng.hpp"
#include "uts/tiling.hpp"

using namespace uts;

namespace {

ColorMask random_raw_mask(int w, int h, uint64_t seed, bool with_black = true) {
  ColorMask m(w, h, MaskState::raw);
  Rng rng(seed);
  const Palette& pal = default_palette();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int c = rng.uniform_int(with_black ? 4 : 3);
      const Rgb col = c < kNumClasses ? pal.colors[static_cast<size_t>(c)] : Rgb{0, 0, 0};
      m.at(x, y, 0) = col.r;
      m.at(x, y, 1) = col.g;
      m.at(x, y, 2) = col.b;
    }
  return m;
}

// brute-force clamped-rectangle mean, one rectangle per output pixel
ColorMask direct_mean(const ColorMask& m, int window) {
  const int lo = -(window / 2), hi = lo + window - 1;
  ColorMask out(m.width, m.height, MaskState::smoothed);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      const int x0 = std::max(0, x + lo), x1 = std::min(m.width - 1, x + hi);
      const int y0 = std::max(0, y + lo), y1 = std::min(m.height - 1, y + hi);
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int yy = y0; yy <= y1; ++yy)
          for (int xx = x0; xx <= x1; ++xx) s += m.at(xx, yy, c);
        out.at(x, y, c) = s / (static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1));
      }
    }
  return out;
}

double max_mask_diff(const ColorMask& a, const ColorMask& b) {
  double worst = 0.0;
  for (size_t i = 0; i < a.pixels.size(); ++i)
    worst = std::max(worst, std::abs(a.pixels[i] - b.pixels[i]));
  return worst;
}

Rgb mask_pixel(const ColorMask& m, int x, int y) {
  return Rgb{static_cast<uint8_t>(m.at(x, y, 0)), static_cast<uint8_t>(m.at(x, y, 1)),
             static_cast<uint8_t>(m.at(x, y, 2))};
}

}  // namespace

TEST_CASE("smoothing leaves constant masks alone", "[refine]") {
  ColorMask m(17, 9, MaskState::raw);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 17; ++x) m.at(x, y, 0) = 255.0;  // solid red
  ColorMask s = smooth_separable(m, 5);
  CHECK(s.state == MaskState::smoothed);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 17; ++x) {
      CHECK(s.at(x, y, 0) == 255.0);
      CHECK(s.at(x, y, 1) == 0.0);
      CHECK(s.at(x, y, 2) == 0.0);
    }
}

TEST_CASE("box-filter impulse response", "[refine]") {
  ColorMask m(9, 9, MaskState::raw);
  for (int c = 0; c < 3; ++c) m.at(4, 4, c) = 255.0;
  ColorMask s = smooth_separable(m, 3);
  for (int c = 0; c < 3; ++c) {
    CHECK(s.at(4, 4, c) == Catch::Approx(255.0 / 9).margin(1e-12));
    CHECK(s.at(3, 3, c) == Catch::Approx(255.0 / 9).margin(1e-12));
    CHECK(s.at(5, 5, c) == Catch::Approx(255.0 / 9).margin(1e-12));
    CHECK(s.at(6, 4, c) == 0.0);
    CHECK(s.at(4, 6, c) == 0.0);
  }

  // corner impulse: clamped 2x2 window -> 255/4
  ColorMask cm(5, 5, MaskState::raw);
  cm.at(0, 0, 0) = 255.0;
  ColorMask cs = smooth_separable(cm, 3);
  CHECK(cs.at(0, 0, 0) == Catch::Approx(255.0 / 4).margin(1e-12));
}

TEST_CASE("separable pass equals the 2-D windowed mean everywhere", "[refine]") {
  const std::vector<std::pair<int, int>> sizes = {{48, 32}, {96, 96}, {64, 80}};
  for (auto [w, h] : sizes)
    for (int window : {3, 17, 48}) {
      DYNAMIC_SECTION("size " << w << "x" << h << " window " << window) {
        ColorMask m = random_raw_mask(w, h, static_cast<uint64_t>(w * 1000 + window));
        ColorMask fast = smooth_separable(m, window);
        ColorMask slow = direct_mean(m, window);
        CHECK(max_mask_diff(fast, slow) <= 1e-9);
      }
    }
}

TEST_CASE("smoothing rejects bad windows and reprocessing", "[refine]") {
  ColorMask m(40, 40, MaskState::raw);
  CHECK_THROWS_AS(smooth_separable(m, 48), InputError);  // larger than both dims
  CHECK_THROWS_AS(smooth_separable(m, 0), InputError);
  ColorMask wide(96, 40, MaskState::raw);
  CHECK_NOTHROW(smooth_separable(wide, 48));  // fits one dimension

  ColorMask s = smooth_separable(m, 3);
  CHECK_THROWS_AS(smooth_separable(s, 3), std::logic_error);
}

TEST_CASE("separable op count stays linear in the window", "[refine]") {
  ColorMask m = random_raw_mask(96, 96, 11);
  SmoothStats stats;
  smooth_separable(m, 48, &stats);
  CHECK(stats.window == 48);
  CHECK(stats.pixels == 96 * 96);
  CHECK(stats.ops_per_pixel_channel() > 0.0);
  CHECK(stats.ops_per_pixel_channel() <= 2.0 * 48);

  // exact count: each pass folds one clamped-window length per pixel per channel
  uint64_t expect = 0;
  const int lo = -24, hi = 23;
  for (int x = 0; x < 96; ++x) {
    const int n = std::min(95, x + hi) - std::max(0, x + lo) + 1;
    expect += static_cast<uint64_t>(n) * 96 * 3;  // horizontal: every row
  }
  for (int y = 0; y < 96; ++y) {
    const int n = std::min(95, y + hi) - std::max(0, y + lo) + 1;
    expect += static_cast<uint64_t>(n) * 96 * 3;  // vertical: every column
  }
  CHECK(stats.accumulate_ops == expect);
}

TEST_CASE("discretize picks the nearest palette color", "[refine]") {
  ColorMask m(3, 1, MaskState::smoothed);
  double vals[3][3] = {{255, 0, 0}, {200, 200, 0}, {0, 0, 255}};
  for (int x = 0; x < 3; ++x)
    for (int c = 0; c < 3; ++c) m.at(x, 0, c) = vals[x][c];
  ColorMask d = discretize(m);
  CHECK(d.state == MaskState::discrete);
  CHECK(mask_pixel(d, 0, 0) == Rgb{255, 0, 0});    // exact hit
  CHECK(mask_pixel(d, 1, 0) == Rgb{255, 255, 0});  // nearest is yellow
  CHECK(mask_pixel(d, 2, 0) == Rgb{255, 0, 0});    // red/green tie -> lowest index
}

TEST_CASE("discretize black handling", "[refine]") {
  ColorMask m(2, 1, MaskState::smoothed);
  m.at(1, 0, 0) = m.at(1, 0, 1) = m.at(1, 0, 2) = 10.0;
  // default: black competes with nothing, red/green tie -> red
  ColorMask d = discretize(m);
  CHECK(mask_pixel(d, 0, 0) == Rgb{255, 0, 0});
  // with the black class both pixels sit nearest to black
  DiscretizeOptions opt;
  opt.black_class = true;
  ColorMask db = discretize(m, default_palette(), opt);
  CHECK(mask_pixel(db, 0, 0) == Rgb{0, 0, 0});
  CHECK(mask_pixel(db, 1, 0) == Rgb{0, 0, 0});

  std::vector<uint8_t> frozen = {1};  // wrong size for 2x1
  DiscretizeOptions bad;
  bad.frozen = &frozen;
  CHECK_THROWS_AS(discretize(m, default_palette(), bad), std::invalid_argument);
}

TEST_CASE("discretize is idempotent and emits palette colors only", "[refine]") {
  ColorMask m(31, 17, MaskState::smoothed);
  Rng rng(5);
  for (double& v : m.pixels) v = rng.uniform() * 255.0;
  ColorMask d1 = discretize(m);
  const Palette& pal = default_palette();
  for (int y = 0; y < d1.height; ++y)
    for (int x = 0; x < d1.width; ++x) {
      const Rgb p = mask_pixel(d1, x, y);
      CHECK((p == pal.colors[0] || p == pal.colors[1] || p == pal.colors[2]));
    }
  ColorMask d2 = discretize(d1);
  CHECK(d1.pixels == d2.pixels);
}

TEST_CASE("overlay blends, rounds and clamps", "[refine]") {
  ColorMask red(4, 3, MaskState::discrete);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) red.at(x, y, 0) = 255.0;
  RgbImage white(4, 3, Rgb{255, 255, 255});

  RgbImage half = overlay(red, white, 0.5);
  CHECK(half.get(0, 0) == Rgb{255, 128, 128});  // 127.5 rounds away from zero
  CHECK(half.get(3, 2) == Rgb{255, 128, 128});

  RgbImage img(4, 3);
  Rng rng(2);
  for (uint8_t& v : img.pixels) v = static_cast<uint8_t>(rng.uniform_int(256));
  CHECK(overlay(red, img, 0.0) == img);
  RgbImage full = overlay(red, img, 1.0);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) CHECK(full.get(x, y) == Rgb{255, 0, 0});
}

TEST_CASE("overlay distance to the mask shrinks as alpha grows", "[refine]") {
  ColorMask d = discretize(random_raw_mask(16, 16, 77, /*with_black=*/false));
  RgbImage img(16, 16);
  Rng rng(78);
  for (uint8_t& v : img.pixels) v = static_cast<uint8_t>(rng.uniform_int(256));

  std::vector<RgbImage> blends;
  for (double a : {0.0, 0.25, 0.5, 0.75, 1.0}) blends.push_back(overlay(d, img, a));
  for (size_t k = 1; k < blends.size(); ++k)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const double target[3] = {d.at(x, y, 0), d.at(x, y, 1), d.at(x, y, 2)};
        const Rgb prev = blends[k - 1].get(x, y), cur = blends[k].get(x, y);
        CHECK(std::abs(cur.r - target[0]) <= std::abs(prev.r - target[0]));
        CHECK(std::abs(cur.g - target[1]) <= std::abs(prev.g - target[1]));
        CHECK(std::abs(cur.b - target[2]) <= std::abs(prev.b - target[2]));
      }
}

TEST_CASE("overlay input validation", "[refine]") {
  ColorMask d(8, 8, MaskState::discrete);
  RgbImage img(8, 8);
  CHECK_THROWS_AS(overlay(d, RgbImage(8, 9), 0.5), InputError);
  CHECK_THROWS_AS(overlay(d, img, -0.1), InputError);
  CHECK_THROWS_AS(overlay(d, img, 1.1), InputError);
  ColorMask raw(8, 8, MaskState::raw);
  CHECK_THROWS_AS(overlay(raw, img, 0.5), std::logic_error);
}

TEST_CASE("pipeline on a uniform mask is a fixed point", "[refine]") {
  TileGrid g = partition(RgbImage(64, 64));
  for (auto& l : g.labels) l = kClassStroma;
  ColorMask raw = assemble_mask(g);
  RgbImage img(64, 64);
  Rng rng(31);
  for (uint8_t& v : img.pixels) v = static_cast<uint8_t>(rng.uniform_int(256));

  RefineResult res = refine_pipeline(raw, img);
  CHECK(res.discrete.pixels == raw.pixels);  // smoothing a constant changes nothing
  ColorMask as_discrete = raw;
  as_discrete.state = MaskState::discrete;
  CHECK(res.overlaid == overlay(as_discrete, img, 0.5));
  CHECK(res.direct_ops_per_pixel == 48.0 * 48.0);
  CHECK(res.stats.ops_per_pixel_channel() <= 2.0 * 48);
  CHECK(res.direct_ops_per_pixel / res.stats.ops_per_pixel_channel() >= 24.0);
}

TEST_CASE("two-region boundary stays a clean red/green transition", "[refine]") {
  ColorMask raw(96, 32, MaskState::raw);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 96; ++x) {
      raw.at(x, y, 0) = x < 48 ? 255.0 : 0.0;
      raw.at(x, y, 1) = x < 48 ? 0.0 : 255.0;
    }
  RefineResult res = refine_pipeline(raw, RgbImage(96, 32, Rgb{255, 255, 255}));

  int first_green = -1;
  for (int y = 0; y < 32; ++y) {
    int transition = -1;
    for (int x = 0; x < 96; ++x) {
      const Rgb p = mask_pixel(res.discrete, x, y);
      const bool is_red = p == Rgb{255, 0, 0};
      const bool is_green = p == Rgb{0, 255, 0};
      REQUIRE((is_red || is_green));  // never yellow, never black
      if (is_green && transition < 0) transition = x;
      if (transition >= 0) CHECK(is_green);  // once green, stays green
    }
    REQUIRE(transition > 0);
    if (first_green < 0) first_green = transition;
    CHECK(transition == first_green);  // columns are vertically uniform
  }
  CHECK(first_green >= 24);
  CHECK(first_green <= 72);
}

TEST_CASE("freeze keeps excluded pixels black through the pipeline", "[refine]") {
  ColorMask raw(64, 32, MaskState::raw);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) raw.at(x, y, 0) = 255.0;  // left tile red, right black
  RefineOptions opt;
  opt.freeze_excluded = true;
  RefineResult res = refine_pipeline(raw, RgbImage(64, 32), default_palette(), opt);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 64; ++x)
      CHECK(mask_pixel(res.discrete, x, y) == (x < 32 ? Rgb{255, 0, 0} : Rgb{0, 0, 0}));
}

TEST_CASE("mask palette plumbing", "[refine]") {
  CHECK(class_index_by_name("tumor") == 0);
  CHECK(class_index_by_name("stroma") == 1);
  CHECK(class_index_by_name("fat") == 2);
  CHECK_THROWS_AS(class_index_by_name("necrosis"), std::invalid_argument);

  ColorMask s(4, 4, MaskState::smoothed);
  CHECK_THROWS_AS(s.to_image(), std::logic_error);
  ColorMask d(2, 2, MaskState::discrete);
  d.at(1, 1, 0) = 255.0;
  RgbImage img = d.to_image();
  CHECK(img.get(1, 1) == Rgb{255, 0, 0});
  CHECK(img.get(0, 0) == Rgb{0, 0, 0});
}
