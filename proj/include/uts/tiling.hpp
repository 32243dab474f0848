#pragma once

// Fixed 32x32 tiling of an ROI image, plus the comma-separated tile manifest
// that carries geometry, exclusion flags, labels and probabilities between
// pipeline stages.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "uts/error.hpp"
#include "uts/image.hpp"
#include "uts/mask.hpp"
#include "uts/tensor.hpp"

namespace uts {

inline constexpr int kTileSize = 32;

struct Tile {
  int col = 0, row = 0;
  int pixel_x = 0, pixel_y = 0;
};

struct TileGrid {
  int tile_size = kTileSize;
  int cols = 0, rows = 0;
  int image_width = 0, image_height = 0;  // source dims (may exceed covered area)
  std::vector<Tile> tiles;
  std::vector<uint8_t> excluded;  // parallel to tiles
  std::vector<int> labels;        // parallel; -1 = no label
  std::vector<double> probs;      // parallel, 3 per tile; NaN = no probs

  int count() const { return static_cast<int>(tiles.size()); }

  bool has_label(int i) const { return labels[static_cast<size_t>(i)] >= 0; }
  bool has_probs(int i) const { return !std::isnan(probs[static_cast<size_t>(i) * 3]); }
  bool any_labels() const {
    for (int l : labels)
      if (l >= 0) return true;
    return false;
  }

  void check_index(int i) const {
    if (i < 0 || i >= count())
      throw std::out_of_range("tile index " + std::to_string(i) + " out of " +
                              std::to_string(count()));
  }
};

inline TileGrid make_empty_grid(int image_width, int image_height, int tile_size = kTileSize) {
  if (tile_size < 1) throw InputError("tile size must be >= 1");
  if (image_width < tile_size || image_height < tile_size)
    throw InputError("image " + std::to_string(image_width) + "x" +
                     std::to_string(image_height) + " smaller than one " +
                     std::to_string(tile_size) + "x" + std::to_string(tile_size) + " tile");
  TileGrid g;
  g.tile_size = tile_size;
  g.cols = image_width / tile_size;
  g.rows = image_height / tile_size;
  g.image_width = image_width;
  g.image_height = image_height;
  g.tiles.reserve(static_cast<size_t>(g.cols) * g.rows);
  for (int r = 0; r < g.rows; ++r)
    for (int c = 0; c < g.cols; ++c)
      g.tiles.push_back({c, r, c * tile_size, r * tile_size});
  const size_t n = g.tiles.size();
  g.excluded.assign(n, 0);
  g.labels.assign(n, -1);
  g.probs.assign(n * 3, std::numeric_limits<double>::quiet_NaN());
  return g;
}

// Partial border strips are dropped, never padded. With a blank threshold,
// tiles whose mean channel intensity exceeds it are flagged excluded but
// keep their coordinates.
inline TileGrid partition(const RgbImage& image, int tile_size = kTileSize,
                          std::optional<double> blank_luminance = std::nullopt) {
  TileGrid g = make_empty_grid(image.width, image.height, tile_size);
  if (blank_luminance) {
    for (int i = 0; i < g.count(); ++i) {
      const Tile& t = g.tiles[static_cast<size_t>(i)];
      double sum = 0.0;
      for (int y = 0; y < tile_size; ++y)
        for (int x = 0; x < tile_size; ++x) {
          const Rgb c = image.get(t.pixel_x + x, t.pixel_y + y);
          sum += (c.r + c.g + c.b) / 3.0;
        }
      const double mean = sum / (static_cast<double>(tile_size) * tile_size);
      if (mean > *blank_luminance) g.excluded[static_cast<size_t>(i)] = 1;
    }
  }
  return g;
}

// Exact crop, values scaled to [0,1].
inline Tensor extract_tile(const RgbImage& image, const TileGrid& grid, int index) {
  grid.check_index(index);
  const Tile& t = grid.tiles[static_cast<size_t>(index)];
  return image_window_to_tensor(image, t.pixel_x, t.pixel_y, grid.tile_size, grid.tile_size);
}

// Paints each tile block its class color over the covered area; excluded
// tiles stay black. Mask dims are the covered area (cols x rows blocks).
inline ColorMask assemble_mask(const TileGrid& grid, const Palette& palette = default_palette()) {
  const int ts = grid.tile_size;
  ColorMask mask(grid.cols * ts, grid.rows * ts, MaskState::raw);
  for (int i = 0; i < grid.count(); ++i) {
    const Tile& t = grid.tiles[static_cast<size_t>(i)];
    Rgb color{0, 0, 0};
    if (!grid.excluded[static_cast<size_t>(i)]) {
      const int label = grid.labels[static_cast<size_t>(i)];
      if (label < 0)
        throw InputError("tile (" + std::to_string(t.col) + "," + std::to_string(t.row) +
                         ") is included but has no label");
      if (label >= kNumClasses)
        throw InputError("tile (" + std::to_string(t.col) + "," + std::to_string(t.row) +
                         ") has out-of-range label " + std::to_string(label));
      color = palette.colors[static_cast<size_t>(label)];
    }
    for (int y = 0; y < ts; ++y)
      for (int x = 0; x < ts; ++x) {
        mask.at(t.pixel_x + x, t.pixel_y + y, 0) = color.r;
        mask.at(t.pixel_x + x, t.pixel_y + y, 1) = color.g;
        mask.at(t.pixel_x + x, t.pixel_y + y, 2) = color.b;
      }
  }
  return mask;
}

// ---------------------------------------------------------------------------
// Manifest: two comment lines, a header line, one record per tile. Empty
// label/prob fields mean "absent"; probabilities print with %.17g so the
// round-trip is lossless.
// ---------------------------------------------------------------------------

inline void write_manifest(const TileGrid& grid, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << "# uts tile manifest\n";
  out << "# tile_size=" << grid.tile_size << " cols=" << grid.cols << " rows=" << grid.rows
      << " image_width=" << grid.image_width << " image_height=" << grid.image_height << "\n";
  out << "col,row,pixel_x,pixel_y,excluded,label,p_tumor,p_stroma,p_fat\n";
  char buf[64];
  for (int i = 0; i < grid.count(); ++i) {
    const Tile& t = grid.tiles[static_cast<size_t>(i)];
    out << t.col << ',' << t.row << ',' << t.pixel_x << ',' << t.pixel_y << ','
        << int(grid.excluded[static_cast<size_t>(i)]) << ',';
    if (grid.has_label(i)) out << grid.labels[static_cast<size_t>(i)];
    for (int c = 0; c < 3; ++c) {
      out << ',';
      if (grid.has_probs(i)) {
        std::snprintf(buf, sizeof buf, "%.17g", grid.probs[static_cast<size_t>(i) * 3 + c]);
        out << buf;
      }
    }
    out << '\n';
  }
  if (!out) throw InputError("write failed for " + path);
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

inline long parse_long(const std::string& s, const std::string& path, int line_no) {
  size_t pos = 0;
  long v = 0;
  try {
    v = std::stol(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty())
    throw InputError(path + ":" + std::to_string(line_no) + ": expected integer, got '" + s +
                     "'");
  return v;
}

inline double parse_double(const std::string& s, const std::string& path, int line_no) {
  size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != s.size() || s.empty())
    throw InputError(path + ":" + std::to_string(line_no) + ": expected number, got '" + s + "'");
  return v;
}

}  // namespace detail

inline TileGrid read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::string line;
  int line_no = 0;

  auto fail = [&](const std::string& what) -> InputError {
    return InputError(path + ":" + std::to_string(line_no) + ": " + what);
  };

  if (!std::getline(in, line) || line != "# uts tile manifest") {
    ++line_no;
    throw fail("missing '# uts tile manifest' signature");
  }
  ++line_no;
  if (!std::getline(in, line)) throw fail("missing geometry line");
  ++line_no;
  int tile_size = 0, cols = 0, rows = 0, iw = 0, ih = 0;
  if (std::sscanf(line.c_str(),
                  "# tile_size=%d cols=%d rows=%d image_width=%d image_height=%d", &tile_size,
                  &cols, &rows, &iw, &ih) != 5)
    throw fail("malformed geometry line '" + line + "'");
  if (tile_size < 1 || cols < 1 || rows < 1) throw fail("non-positive grid geometry");
  if (!std::getline(in, line) ||
      line != "col,row,pixel_x,pixel_y,excluded,label,p_tumor,p_stroma,p_fat")
    { ++line_no; throw fail("missing column header"); }
  ++line_no;

  TileGrid g;
  g.tile_size = tile_size;
  g.cols = cols;
  g.rows = rows;
  g.image_width = iw;
  g.image_height = ih;
  const size_t expect = static_cast<size_t>(cols) * rows;
  g.tiles.reserve(expect);

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = detail::split_csv(line);
    if (f.size() != 9)
      throw fail("expected 9 fields, got " + std::to_string(f.size()));
    Tile t;
    t.col = static_cast<int>(detail::parse_long(f[0], path, line_no));
    t.row = static_cast<int>(detail::parse_long(f[1], path, line_no));
    t.pixel_x = static_cast<int>(detail::parse_long(f[2], path, line_no));
    t.pixel_y = static_cast<int>(detail::parse_long(f[3], path, line_no));
    if (t.col < 0 || t.col >= cols || t.row < 0 || t.row >= rows)
      throw fail("tile (" + f[0] + "," + f[1] + ") outside " + std::to_string(cols) + "x" +
                 std::to_string(rows) + " grid");
    if (t.pixel_x != t.col * tile_size || t.pixel_y != t.row * tile_size)
      throw fail("pixel offsets disagree with col/row for tile (" + f[0] + "," + f[1] + ")");
    const long excl = detail::parse_long(f[4], path, line_no);
    if (excl != 0 && excl != 1) throw fail("excluded flag must be 0 or 1, got '" + f[4] + "'");
    int label = -1;
    if (!f[5].empty()) {
      label = static_cast<int>(detail::parse_long(f[5], path, line_no));
      if (label < 0 || label >= kNumClasses)
        throw fail("label out of range: '" + f[5] + "'");
    }
    const bool probs_present = !f[6].empty() || !f[7].empty() || !f[8].empty();
    double p[3] = {std::numeric_limits<double>::quiet_NaN(),
                   std::numeric_limits<double>::quiet_NaN(),
                   std::numeric_limits<double>::quiet_NaN()};
    if (probs_present) {
      if (f[6].empty() || f[7].empty() || f[8].empty())
        throw fail("probabilities must be all present or all absent");
      for (int c = 0; c < 3; ++c) p[c] = detail::parse_double(f[static_cast<size_t>(6 + c)], path, line_no);
    }
    g.tiles.push_back(t);
    g.excluded.push_back(static_cast<uint8_t>(excl));
    g.labels.push_back(label);
    g.probs.insert(g.probs.end(), {p[0], p[1], p[2]});
  }
  if (g.tiles.size() != expect)
    throw InputError(path + ": expected " + std::to_string(expect) + " tile records, got " +
                     std::to_string(g.tiles.size()));
  return g;
}

// SlideTiler-style per-tile export: r{row}_c{col}.png under dir.
template <class WritePngFn>
inline void export_tiles(const RgbImage& image, const TileGrid& grid, const std::string& dir,
                         WritePngFn&& write_fn) {
  for (int i = 0; i < grid.count(); ++i) {
    const Tile& t = grid.tiles[static_cast<size_t>(i)];
    RgbImage out(grid.tile_size, grid.tile_size);
    for (int y = 0; y < grid.tile_size; ++y)
      for (int x = 0; x < grid.tile_size; ++x)
        out.set(x, y, image.get(t.pixel_x + x, t.pixel_y + y));
    write_fn(dir + "/r" + std::to_string(t.row) + "_c" + std::to_string(t.col) + ".png", out);
  }
}

}  // namespace uts
