#pragma once

// Procedural stand-in for the clinical dataset: three visually distinct
// texture families, exact per-tile ground truth, fully seeded. Patients own
// 1-3 class-pure ROIs so the fold splitter has realistic grouping to chew on.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "uts/error.hpp"
#include "uts/image.hpp"
#include "uts/mask.hpp"
#include "uts/rng.hpp"
#include "uts/tiling.hpp"

namespace uts {

enum class SynthLayout { pure, split };  // split: left/right halves two classes

struct SynthSpec {
  int width = 96, height = 96;  // multiples of the tile size
  SynthLayout layout = SynthLayout::pure;
  int class_label = kClassTumor;   // pure layout
  int second_label = kClassStroma;  // right half under split layout
  double noise = 8.0;              // per-channel uniform jitter amplitude
  uint64_t seed = 1;
  std::string patient_id = "p000";
};

namespace detail {

inline uint8_t clamp_channel(double v) {
  return static_cast<uint8_t>(std::clamp(v, 0.0, 255.0));
}

inline void put_noisy(RgbImage& img, int x, int y, double r, double g, double b, double noise,
                      Rng& rng) {
  img.set(x, y, {clamp_channel(r + rng.uniform(-noise, noise)),
                 clamp_channel(g + rng.uniform(-noise, noise)),
                 clamp_channel(b + rng.uniform(-noise, noise))});
}

// Dark purple blobs over a pink field.
inline void paint_tumor_tile(RgbImage& img, int x0, int y0, int ts, double noise, Rng& rng) {
  struct Blob {
    double cx, cy, r;
  };
  std::vector<Blob> blobs;
  const int n_blobs = 8 + static_cast<int>(rng.uniform_int(5));
  for (int i = 0; i < n_blobs; ++i)
    blobs.push_back({rng.uniform(0, ts), rng.uniform(0, ts), rng.uniform(2.0, 4.5)});
  for (int y = 0; y < ts; ++y)
    for (int x = 0; x < ts; ++x) {
      double r = 225, g = 170, b = 195;  // pink stroma-like background
      for (const Blob& bl : blobs) {
        const double dx = x - bl.cx, dy = y - bl.cy;
        if (dx * dx + dy * dy <= bl.r * bl.r) {
          r = 90;
          g = 40;
          b = 110;  // hyperchromatic nucleus
          break;
        }
      }
      put_noisy(img, x0 + x, y0 + y, r, g, b, noise, rng);
    }
}

// Smooth low-frequency pink/green gradient.
inline void paint_stroma_tile(RgbImage& img, int x0, int y0, int ts, double noise, Rng& rng) {
  const double ax = rng.uniform(0.08, 0.25), ay = rng.uniform(0.08, 0.25);
  const double phase = rng.uniform(0.0, 6.283185307179586);
  for (int y = 0; y < ts; ++y)
    for (int x = 0; x < ts; ++x) {
      const double w = 0.5 + 0.5 * std::sin(ax * x + ay * y + phase);
      const double r = 230 * (1 - w) + 150 * w;
      const double g = 160 * (1 - w) + 200 * w;
      const double b = 200 * (1 - w) + 160 * w;
      put_noisy(img, x0 + x, y0 + y, r, g, b, noise, rng);
    }
}

// Pale rounded cells: white interiors, thin gray membranes.
inline void paint_fat_tile(RgbImage& img, int x0, int y0, int ts, double noise, Rng& rng) {
  struct Cell {
    double cx, cy, r;
  };
  std::vector<Cell> cells;
  const int grid = 3;  // roughly grid x grid cells per tile
  const double cell = static_cast<double>(ts) / grid;
  for (int gy = 0; gy < grid; ++gy)
    for (int gx = 0; gx < grid; ++gx)
      cells.push_back({(gx + 0.5) * cell + rng.uniform(-2.0, 2.0),
                       (gy + 0.5) * cell + rng.uniform(-2.0, 2.0),
                       cell * 0.5 - rng.uniform(0.5, 1.5)});
  for (int y = 0; y < ts; ++y)
    for (int x = 0; x < ts; ++x) {
      double r = 235, g = 225, b = 230;  // pale background
      for (const Cell& c : cells) {
        const double dx = x - c.cx, dy = y - c.cy;
        const double d = std::sqrt(dx * dx + dy * dy);
        if (d <= c.r - 1.2) {
          r = 250;
          g = 248;
          b = 250;  // lipid vacuole
          break;
        }
        if (d <= c.r) {
          r = 180;
          g = 175;
          b = 185;  // membrane ring
          break;
        }
      }
      put_noisy(img, x0 + x, y0 + y, r, g, b, noise, rng);
    }
}

inline void paint_class_tile(RgbImage& img, int x0, int y0, int ts, int label, double noise,
                             Rng& rng) {
  switch (label) {
    case kClassTumor: paint_tumor_tile(img, x0, y0, ts, noise, rng); break;
    case kClassStroma: paint_stroma_tile(img, x0, y0, ts, noise, rng); break;
    case kClassFat: paint_fat_tile(img, x0, y0, ts, noise, rng); break;
    default: throw std::invalid_argument("bad class label " + std::to_string(label));
  }
}

}  // namespace detail

struct SynthRoi {
  RgbImage image;
  TileGrid grid;  // labels carry the exact ground truth
};

inline SynthRoi generate_roi(const SynthSpec& spec) {
  if (spec.width % kTileSize != 0 || spec.height % kTileSize != 0)
    throw InputError("ROI dimensions " + std::to_string(spec.width) + "x" +
                     std::to_string(spec.height) + " must be multiples of " +
                     std::to_string(kTileSize));
  if (spec.noise < 0.0) throw InputError("noise level must be >= 0");
  SynthRoi roi;
  roi.image = RgbImage(spec.width, spec.height);
  roi.grid = make_empty_grid(spec.width, spec.height);
  for (int i = 0; i < roi.grid.count(); ++i) {
    const Tile& t = roi.grid.tiles[static_cast<size_t>(i)];
    int label = spec.class_label;
    if (spec.layout == SynthLayout::split && t.col >= roi.grid.cols / 2)
      label = spec.second_label;
    roi.grid.labels[static_cast<size_t>(i)] = label;
    Rng rng(Rng::mix(spec.seed, static_cast<uint64_t>(i)));
    detail::paint_class_tile(roi.image, t.pixel_x, t.pixel_y, kTileSize, label, spec.noise, rng);
  }
  return roi;
}

struct RoiRecord {
  std::string roi_id;
  std::string patient_id;
  int class_label = -1;
  int width = 0, height = 0;
  std::string image_path;  // relative to the manifest directory
  std::string tiles_path;
};

struct SynthDataset {
  std::vector<SynthRoi> rois;
  std::vector<RoiRecord> records;
};

// Class-pure ROIs, n per class, class-major order. Patients own 1-3
// consecutive same-class ROIs; ids and all textures derive from the seed.
inline SynthDataset generate_dataset(int n_per_class, const SynthSpec& tmpl, uint64_t seed) {
  if (n_per_class < 1) throw InputError("ROIs per class must be >= 1");
  SynthDataset ds;
  Rng patient_rng(Rng::mix(seed, 0x706174ull));
  int patient_counter = 0;
  int roi_counter = 0;
  for (int cls = 0; cls < kNumClasses; ++cls) {
    int left_for_patient = 0;
    std::string patient;
    for (int i = 0; i < n_per_class; ++i) {
      if (left_for_patient == 0) {
        left_for_patient = 1 + static_cast<int>(patient_rng.uniform_int(3));
        char buf[16];
        std::snprintf(buf, sizeof buf, "p%03d", patient_counter++);
        patient = buf;
      }
      --left_for_patient;
      SynthSpec spec = tmpl;
      spec.layout = SynthLayout::pure;
      spec.class_label = cls;
      spec.seed = Rng::mix(seed, static_cast<uint64_t>(roi_counter) + 1);
      spec.patient_id = patient;
      char buf[16];
      std::snprintf(buf, sizeof buf, "roi_%04d", roi_counter);
      RoiRecord rec;
      rec.roi_id = buf;
      rec.patient_id = patient;
      rec.class_label = cls;
      rec.width = spec.width;
      rec.height = spec.height;
      rec.image_path = std::string("images/") + buf + ".png";
      rec.tiles_path = std::string("tiles/") + buf + ".csv";
      ds.rois.push_back(generate_roi(spec));
      ds.records.push_back(rec);
      ++roi_counter;
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Dataset manifest: '# uts dataset manifest' + header + one row per ROI.
// ---------------------------------------------------------------------------

inline void write_dataset_manifest(const std::vector<RoiRecord>& records,
                                   const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  out << "# uts dataset manifest\n";
  out << "roi,patient,class,width,height,image,tiles\n";
  const Palette& pal = default_palette();
  for (const RoiRecord& r : records)
    out << r.roi_id << ',' << r.patient_id << ','
        << pal.names[static_cast<size_t>(r.class_label)] << ',' << r.width << ',' << r.height
        << ',' << r.image_path << ',' << r.tiles_path << '\n';
  if (!out) throw InputError("write failed for " + path);
}

inline std::vector<RoiRecord> read_dataset_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  std::string line;
  int line_no = 0;
  auto fail = [&](const std::string& what) -> InputError {
    return InputError(path + ":" + std::to_string(line_no) + ": " + what);
  };
  if (!std::getline(in, line) || line != "# uts dataset manifest") {
    ++line_no;
    throw fail("missing '# uts dataset manifest' signature");
  }
  ++line_no;
  if (!std::getline(in, line) || line != "roi,patient,class,width,height,image,tiles") {
    ++line_no;
    throw fail("missing column header");
  }
  ++line_no;
  std::vector<RoiRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = detail::split_csv(line);
    if (f.size() != 7) throw fail("expected 7 fields, got " + std::to_string(f.size()));
    RoiRecord r;
    r.roi_id = f[0];
    r.patient_id = f[1];
    try {
      r.class_label = class_index_by_name(f[2]);
    } catch (const std::invalid_argument& e) {
      throw fail(e.what());
    }
    r.width = static_cast<int>(detail::parse_long(f[3], path, line_no));
    r.height = static_cast<int>(detail::parse_long(f[4], path, line_no));
    r.image_path = f[5];
    r.tiles_path = f[6];
    if (r.roi_id.empty() || r.patient_id.empty()) throw fail("empty roi or patient id");
    records.push_back(r);
  }
  if (records.empty()) throw InputError(path + ": no ROI records");
  return records;
}

}  // namespace uts
