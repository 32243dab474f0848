#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "uts/png_io.hpp"
#include "uts/rng.hpp"
#include "uts/tiling.hpp"

using namespace uts;

namespace {

std::string temp_dir() {
  static const std::string dir = [] {
    std::string d = (std::filesystem::temp_directory_path() / "uts_tiling_XXXXXX").string();
    if (!mkdtemp(d.data())) throw std::runtime_error("mkdtemp failed");
    return d;
  }();
  return dir;
}

RgbImage random_image(int w, int h, uint64_t seed) {
  RgbImage img(w, h);
  Rng rng(seed);
  for (uint8_t& v : img.pixels) v = static_cast<uint8_t>(rng.uniform_int(256));
  return img;
}

}  // namespace

TEST_CASE("partition basic grids", "[tiling]") {
  TileGrid g = partition(RgbImage(64, 64));
  REQUIRE(g.count() == 4);
  CHECK(g.cols == 2);
  CHECK(g.rows == 2);
  const std::vector<std::pair<int, int>> want = {{0, 0}, {32, 0}, {0, 32}, {32, 32}};
  for (int i = 0; i < 4; ++i) {
    CHECK(g.tiles[static_cast<size_t>(i)].pixel_x == want[static_cast<size_t>(i)].first);
    CHECK(g.tiles[static_cast<size_t>(i)].pixel_y == want[static_cast<size_t>(i)].second);
  }

  CHECK(partition(RgbImage(512, 512)).count() == 256);
  CHECK(partition(RgbImage(65, 64)).count() == 4);  // 1-pixel strip dropped

  CHECK_THROWS_AS(partition(RgbImage(31, 64)), InputError);
  CHECK_THROWS_AS(partition(RgbImage(64, 20)), InputError);
}

TEST_CASE("tile count is floor arithmetic for all sizes", "[tiling]") {
  for (int w : {32, 33, 63, 64, 96, 100, 511, 512})
    for (int h : {32, 47, 64, 129}) {
      TileGrid g = partition(RgbImage(w, h));
      CHECK(g.count() == (w / 32) * (h / 32));
      CHECK(g.count() == g.cols * g.rows);
      for (const Tile& t : g.tiles) {
        CHECK(t.pixel_x == t.col * 32);
        CHECK(t.pixel_y == t.row * 32);
        CHECK(t.pixel_x + 32 <= w);
        CHECK(t.pixel_y + 32 <= h);
      }
    }
}

TEST_CASE("blank filter flags bright tiles but keeps geometry", "[tiling]") {
  RgbImage img(64, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 64; ++x) img.set(x, y, x < 32 ? Rgb{10, 10, 10} : Rgb{250, 250, 250});
  TileGrid g = partition(img, 32, 200.0);
  REQUIRE(g.count() == 2);
  CHECK(g.excluded[0] == 0);
  CHECK(g.excluded[1] == 1);
  CHECK(g.tiles[1].pixel_x == 32);  // exclusion does not move tiles

  // mean exactly at the threshold stays included (strictly "exceeds")
  RgbImage flat(32, 32, Rgb{200, 200, 200});
  TileGrid at = partition(flat, 32, 200.0);
  CHECK(at.excluded[0] == 0);

  // filter off: nothing excluded
  TileGrid off = partition(img);
  CHECK(off.excluded[0] == 0);
  CHECK(off.excluded[1] == 0);
}

TEST_CASE("extract_tile scales and crops exactly", "[tiling]") {
  RgbImage white(32, 32, Rgb{255, 255, 255});
  TileGrid g1 = partition(white);
  Tensor t = extract_tile(white, g1, 0);
  REQUIRE(t.shape == std::vector<int>{32, 32, 3});
  for (double v : t.data) CHECK(v == 1.0);

  RgbImage img(64, 64);
  img.set(33, 34, Rgb{255, 0, 0});
  TileGrid g = partition(img);
  Tensor tile = extract_tile(img, g, 3);  // tile at (col 1, row 1) = pixel (32,32)
  CHECK(tile.at(2, 1, 0) == 1.0);         // marker at tile-local (x=1, y=2)
  CHECK(tile.at(2, 1, 1) == 0.0);
  CHECK(tile.at(2, 2, 0) == 0.0);

  CHECK_THROWS_AS(extract_tile(img, g, 4), std::out_of_range);
  CHECK_THROWS_AS(extract_tile(img, g, -1), std::out_of_range);
}

TEST_CASE("extract_tile matches per-pixel crop oracle", "[tiling]") {
  RgbImage img = random_image(96, 64, 404);
  TileGrid g = partition(img);
  for (int i = 0; i < g.count(); ++i) {
    Tensor t = extract_tile(img, g, i);
    const Tile& tile = g.tiles[static_cast<size_t>(i)];
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x) {
        const Rgb c = img.get(tile.pixel_x + x, tile.pixel_y + y);
        CHECK(t.at(y, x, 0) == c.r / 255.0);
        CHECK(t.at(y, x, 1) == c.g / 255.0);
        CHECK(t.at(y, x, 2) == c.b / 255.0);
      }
  }
}

TEST_CASE("assemble_mask paints class blocks", "[tiling]") {
  TileGrid one = partition(RgbImage(32, 32));
  one.labels[0] = kClassTumor;
  ColorMask m = assemble_mask(one);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      CHECK(m.at(x, y, 0) == 255.0);
      CHECK(m.at(x, y, 1) == 0.0);
      CHECK(m.at(x, y, 2) == 0.0);
    }

  TileGrid g = partition(RgbImage(64, 64));
  for (int i = 0; i < 4; ++i) g.labels[static_cast<size_t>(i)] = kClassStroma;
  ColorMask green = assemble_mask(g);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      CHECK(green.at(x, y, 0) == 0.0);
      CHECK(green.at(x, y, 1) == 255.0);
      CHECK(green.at(x, y, 2) == 0.0);
    }
}

TEST_CASE("assemble_mask checkerboard matches paint oracle", "[tiling]") {
  TileGrid g = partition(RgbImage(128, 128));
  for (const Tile& t : g.tiles)
    g.labels[static_cast<size_t>(t.row * g.cols + t.col)] =
        (t.row + t.col) % 2 == 0 ? kClassTumor : kClassFat;
  ColorMask m = assemble_mask(g);
  const Palette& pal = default_palette();
  for (int y = 0; y < 128; ++y)
    for (int x = 0; x < 128; ++x) {
      const Rgb want = pal.colors[static_cast<size_t>((y / 32 + x / 32) % 2 == 0 ? kClassTumor
                                                                                 : kClassFat)];
      CHECK(m.at(x, y, 0) == want.r);
      CHECK(m.at(x, y, 1) == want.g);
      CHECK(m.at(x, y, 2) == want.b);
    }
}

TEST_CASE("assemble_mask exclusion and error cases", "[tiling]") {
  TileGrid g = partition(RgbImage(64, 32));
  g.labels[0] = kClassFat;
  g.excluded[1] = 1;  // excluded needs no label
  ColorMask m = assemble_mask(g);
  CHECK(m.at(40, 10, 0) == 0.0);
  CHECK(m.at(40, 10, 1) == 0.0);
  CHECK(m.at(40, 10, 2) == 0.0);
  CHECK(m.at(10, 10, 0) == 255.0);

  TileGrid bad = partition(RgbImage(64, 32));
  bad.labels[0] = kClassFat;  // tile 1 included but unlabeled
  CHECK_THROWS_AS(assemble_mask(bad), InputError);

  bad.labels[1] = 7;
  CHECK_THROWS_AS(assemble_mask(bad), InputError);
}

TEST_CASE("partition then assemble with constant labels is bit-exact", "[tiling]") {
  TileGrid g = partition(RgbImage(96, 96));
  for (auto& l : g.labels) l = kClassStroma;
  ColorMask m = assemble_mask(g);
  REQUIRE(m.width == 96);
  REQUIRE(m.height == 96);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) {
      CHECK(m.at(x, y, 0) == 0.0);
      CHECK(m.at(x, y, 1) == 255.0);
      CHECK(m.at(x, y, 2) == 0.0);
    }
}

TEST_CASE("manifest round-trips losslessly", "[tiling]") {
  TileGrid g = partition(RgbImage(96, 64));
  g.labels[0] = kClassTumor;
  g.labels[4] = kClassFat;
  g.excluded[2] = 1;
  g.probs[0] = 1.0 / 3.0;
  g.probs[1] = 0.124999999999999997;
  g.probs[2] = 1.0 - 1.0 / 3.0 - 0.124999999999999997;
  const std::string path = temp_dir() + "/grid.csv";
  write_manifest(g, path);
  TileGrid r = read_manifest(path);

  REQUIRE(r.count() == g.count());
  CHECK(r.tile_size == g.tile_size);
  CHECK(r.cols == g.cols);
  CHECK(r.rows == g.rows);
  CHECK(r.image_width == 96);
  CHECK(r.image_height == 64);
  for (int i = 0; i < g.count(); ++i) {
    CHECK(r.tiles[static_cast<size_t>(i)].col == g.tiles[static_cast<size_t>(i)].col);
    CHECK(r.tiles[static_cast<size_t>(i)].row == g.tiles[static_cast<size_t>(i)].row);
    CHECK(r.excluded[static_cast<size_t>(i)] == g.excluded[static_cast<size_t>(i)]);
    CHECK(r.labels[static_cast<size_t>(i)] == g.labels[static_cast<size_t>(i)]);
    CHECK(r.has_probs(i) == g.has_probs(i));
  }
  // probability bits survive the %.17g round-trip
  for (int c = 0; c < 3; ++c) CHECK(r.probs[static_cast<size_t>(c)] == g.probs[static_cast<size_t>(c)]);
  // absent labels come back as absent, not zero
  CHECK(r.labels[1] == -1);
  CHECK_FALSE(r.has_probs(1));
}

TEST_CASE("459-row manifest with balanced classes", "[tiling]") {
  TileGrid g = partition(RgbImage(864, 544));  // 27 x 17 = 459
  REQUIRE(g.count() == 459);
  for (int i = 0; i < 459; ++i) g.labels[static_cast<size_t>(i)] = i / 153;
  const std::string path = temp_dir() + "/big.csv";
  write_manifest(g, path);
  TileGrid r = read_manifest(path);
  REQUIRE(r.count() == 459);
  int counts[3] = {0, 0, 0};
  for (int l : r.labels) {
    REQUIRE((l >= 0 && l < 3));
    ++counts[l];
  }
  CHECK(counts[0] == 153);
  CHECK(counts[1] == 153);
  CHECK(counts[2] == 153);
}

TEST_CASE("manifest rejects malformed input with line numbers", "[tiling]") {
  const std::string dir = temp_dir();
  auto write_file = [&](const std::string& name, const std::string& body) {
    const std::string path = dir + "/" + name;
    std::ofstream(path) << body;
    return path;
  };
  const std::string header =
      "# uts tile manifest\n"
      "# tile_size=32 cols=2 rows=1 image_width=64 image_height=32\n"
      "col,row,pixel_x,pixel_y,excluded,label,p_tumor,p_stroma,p_fat\n";

  CHECK_THROWS_AS(read_manifest(dir + "/missing.csv"), InputError);

  auto expect_error = [&](const std::string& body, const std::string& fragment) {
    const std::string path = write_file("bad.csv", body);
    try {
      read_manifest(path);
      FAIL("expected rejection for fragment '" << fragment << "'");
    } catch (const InputError& e) {
      INFO(e.what());
      CHECK(std::string(e.what()).find(fragment) != std::string::npos);
    }
  };

  expect_error("not a manifest\n", ":1:");
  expect_error("# uts tile manifest\n# tile_size=banana\n", ":2:");
  expect_error("# uts tile manifest\n# tile_size=32 cols=2 rows=1 image_width=64 image_height=32\nwrong,header\n",
               ":3:");
  expect_error(header + "0,0,0,0,0,0,,\n", ":4:");            // 8 fields
  expect_error(header + "x,0,0,0,0,0,,,\n", ":4:");           // bad integer
  expect_error(header + "0,0,0,0,0,0,,,\n1,0,32,0,5,1,,,\n", ":5:");  // bad excluded flag
  expect_error(header + "0,0,0,0,0,9,,,\n", "label out of range");
  expect_error(header + "0,0,7,0,0,0,,,\n", "pixel offsets");
  expect_error(header + "3,0,96,0,0,0,,,\n", "outside");
  expect_error(header + "0,0,0,0,0,0,0.5,,\n", "all present or all absent");
  expect_error(header + "0,0,0,0,0,0,,,\n", "expected 2 tile records, got 1");
}

TEST_CASE("export_tiles names by row and column", "[tiling]") {
  RgbImage img = random_image(64, 64, 7);
  TileGrid g = partition(img);
  std::vector<std::string> names;
  std::vector<RgbImage> outputs;
  export_tiles(img, g, "out", [&](const std::string& path, const RgbImage& tile) {
    names.push_back(path);
    outputs.push_back(tile);
  });
  REQUIRE(names.size() == 4);
  CHECK(names[0] == "out/r0_c0.png");
  CHECK(names[1] == "out/r0_c1.png");
  CHECK(names[2] == "out/r1_c0.png");
  CHECK(names[3] == "out/r1_c1.png");
  // content equals the crop
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) CHECK(outputs[3].get(x, y) == img.get(32 + x, 32 + y));
}

TEST_CASE("png round trip", "[tiling]") {
  RgbImage img = random_image(48, 33, 99);
  const std::string path = temp_dir() + "/img.png";
  write_png(path, img);
  RgbImage back = read_png(path);
  REQUIRE(back.width == img.width);
  REQUIRE(back.height == img.height);
  CHECK(back.pixels == img.pixels);

  const std::string bogus = temp_dir() + "/bogus.png";
  std::ofstream(bogus) << "this is not a png";
  CHECK_THROWS_AS(read_png(bogus), InputError);
  CHECK_THROWS_AS(read_png(temp_dir() + "/nope.png"), InputError);
}
