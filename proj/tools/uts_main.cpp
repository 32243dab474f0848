// Pipeline front-end. Stages talk to each other only through files (images,
// manifests, checkpoints), so each is independently scriptable and testable.
// Exit codes: 0 success, 1 internal failure, 2 bad input or usage.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "uts/checkpoint.hpp"
#include "uts/error.hpp"
#include "uts/lvit.hpp"
#include "uts/metrics.hpp"
#include "uts/png_io.hpp"
#include "uts/refine.hpp"
#include "uts/synthdata.hpp"
#include "uts/threading.hpp"
#include "uts/tiling.hpp"
#include "uts/train.hpp"

namespace fs = std::filesystem;

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw uts::InputError("cannot create directory " + dir + ": " + ec.message());
}

std::string join(const std::string& dir, const std::string& rel) {
  return (fs::path(dir) / rel).string();
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

struct SynthOpts {
  int rois = 30;
  int width = 96, height = 96;
  double noise = 8.0;
  uint64_t seed = 1;
  int mixed = 0;
  std::string out;
};

void run_synth(const SynthOpts& o) {
  ensure_dir(o.out);
  ensure_dir(join(o.out, "images"));
  ensure_dir(join(o.out, "tiles"));
  uts::SynthSpec tmpl;
  tmpl.width = o.width;
  tmpl.height = o.height;
  tmpl.noise = o.noise;
  uts::SynthDataset ds = uts::generate_dataset(o.rois, tmpl, o.seed);
  for (size_t i = 0; i < ds.rois.size(); ++i) {
    uts::write_png(join(o.out, ds.records[i].image_path), ds.rois[i].image);
    uts::write_manifest(ds.rois[i].grid, join(o.out, ds.records[i].tiles_path));
  }
  uts::write_dataset_manifest(ds.records, join(o.out, "dataset.csv"));

  if (o.mixed > 0) {
    ensure_dir(join(o.out, "mixed"));
    for (int i = 0; i < o.mixed; ++i) {
      uts::SynthSpec spec = tmpl;
      spec.layout = uts::SynthLayout::split;
      spec.class_label = i % uts::kNumClasses;
      spec.second_label = (i + 1) % uts::kNumClasses;
      spec.seed = uts::Rng::mix(o.seed, 0x6d69786564ull + static_cast<uint64_t>(i));
      uts::SynthRoi roi = uts::generate_roi(spec);
      char buf[32];
      std::snprintf(buf, sizeof buf, "mixed_%03d", i);
      uts::write_png(join(o.out, std::string("mixed/") + buf + ".png"), roi.image);
      uts::write_manifest(roi.grid, join(o.out, std::string("mixed/") + buf + ".csv"));
    }
  }
  const int tiles_per_roi = (o.width / uts::kTileSize) * (o.height / uts::kTileSize);
  std::printf("wrote %d ROIs (%d per class, %d tiles each) to %s\n",
              static_cast<int>(ds.rois.size()), o.rois, tiles_per_roi, o.out.c_str());
  if (o.mixed > 0) std::printf("wrote %d mixed-layout ROIs to %s\n", o.mixed, join(o.out, "mixed").c_str());
}

// ---------------------------------------------------------------------------
// tile
// ---------------------------------------------------------------------------

struct TileOpts {
  std::string image;
  int tile_size = 32;
  double blank_threshold = -1.0;  // <0 disables the filter
  std::string export_dir;
  std::string out;
};

void run_tile(const TileOpts& o) {
  const uts::RgbImage img = uts::read_png(o.image);
  std::optional<double> blank;
  if (o.blank_threshold >= 0.0) blank = o.blank_threshold;
  const uts::TileGrid grid = uts::partition(img, o.tile_size, blank);
  uts::write_manifest(grid, o.out);
  if (!o.export_dir.empty()) {
    ensure_dir(o.export_dir);
    uts::export_tiles(img, grid, o.export_dir,
                      [](const std::string& path, const uts::RgbImage& tile) {
                        uts::write_png(path, tile);
                      });
  }
  int excluded = 0;
  for (uint8_t e : grid.excluded) excluded += e;
  std::printf("%d tiles (%d x %d), %d excluded -> %s\n", grid.count(), grid.cols, grid.rows,
              excluded, o.out.c_str());
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainOpts {
  std::string data;
  std::string preset = "all";
  bool linear_attn = false;
  int epochs = 30;
  int batch = 64;
  double lr = 0.05;
  uint64_t seed = 1;
  int threads = 0;
  int kfold = 3;
  int fold = 0;  // held-out fold; -1 trains on everything
  std::string out;
};

struct LoadedDataset {
  std::vector<uts::LabeledTile> tiles;
  std::vector<std::string> roi_patients;   // parallel to records
  std::vector<int> tile_roi;               // tile -> record index
  std::vector<uts::RoiRecord> records;
};

LoadedDataset load_dataset(const std::string& manifest) {
  LoadedDataset ds;
  ds.records = uts::read_dataset_manifest(manifest);
  const std::string base = fs::path(manifest).parent_path().string();
  for (size_t r = 0; r < ds.records.size(); ++r) {
    const uts::RoiRecord& rec = ds.records[r];
    ds.roi_patients.push_back(rec.patient_id);
    const uts::RgbImage img = uts::read_png(join(base, rec.image_path));
    const uts::TileGrid grid = uts::read_manifest(join(base, rec.tiles_path));
    if (grid.image_width != img.width || grid.image_height != img.height)
      throw uts::InputError(rec.roi_id + ": manifest geometry " +
                            std::to_string(grid.image_width) + "x" +
                            std::to_string(grid.image_height) + " vs image " +
                            std::to_string(img.width) + "x" + std::to_string(img.height));
    for (int i = 0; i < grid.count(); ++i) {
      if (grid.excluded[static_cast<size_t>(i)] || !grid.has_label(i)) continue;
      ds.tiles.push_back({uts::extract_tile(img, grid, i), grid.labels[static_cast<size_t>(i)]});
      ds.tile_roi.push_back(static_cast<int>(r));
    }
  }
  if (ds.tiles.empty()) throw uts::InputError(manifest + ": no labeled tiles");
  return ds;
}

void run_train(const TrainOpts& o) {
  ensure_dir(o.out);
  const LoadedDataset ds = load_dataset(o.data);

  std::vector<uts::LabeledTile> train_tiles, val_tiles;
  if (o.fold >= 0) {
    if (o.fold >= o.kfold)
      throw uts::InputError("fold " + std::to_string(o.fold) + " out of range for k=" +
                            std::to_string(o.kfold));
    const uts::FoldPlan plan = uts::kfold_split(ds.roi_patients, o.kfold, o.seed);
    for (size_t i = 0; i < ds.tiles.size(); ++i) {
      const std::string& patient =
          ds.records[static_cast<size_t>(ds.tile_roi[i])].patient_id;
      if (plan.fold_of_patient(patient) == o.fold)
        val_tiles.push_back(ds.tiles[i]);
      else
        train_tiles.push_back(ds.tiles[i]);
    }
  } else {
    train_tiles = ds.tiles;
  }

  uts::TrainConfig cfg;
  cfg.batch_size = o.batch;
  cfg.epochs = o.epochs;
  cfg.learning_rate = o.lr;
  cfg.seed = o.seed;
  cfg.threads = o.threads;
  cfg.model = uts::LVitConfig::from_preset(o.preset);
  cfg.model.use_linear_attn = o.linear_attn;

  std::printf("training %s (%s) on %d tiles, validating on %d\n", o.preset.c_str(),
              cfg.model.describe().c_str(), static_cast<int>(train_tiles.size()),
              static_cast<int>(val_tiles.size()));
  const uts::TrainResult res = uts::train_epochs(train_tiles, val_tiles, cfg);

  const std::string log_path = join(o.out, "train_log.csv");
  {
    std::FILE* f = std::fopen(log_path.c_str(), "w");
    if (!f) throw uts::InputError("cannot write " + log_path);
    std::fprintf(f, "epoch,mean_loss,val_accuracy\n");
    for (const uts::EpochLog& e : res.log) {
      std::fprintf(f, "%d,%.6f,%.4f\n", e.epoch, e.mean_loss, e.val_accuracy);
      std::printf("%d,%.6f,%.4f\n", e.epoch, e.mean_loss, e.val_accuracy);
    }
    std::fclose(f);
  }
  const std::string ck_path = join(o.out, "checkpoint.bin");
  uts::save_checkpoint(ck_path, res.params, cfg.model);
  std::printf("checkpoint -> %s\n", ck_path.c_str());
}

// ---------------------------------------------------------------------------
// infer
// ---------------------------------------------------------------------------

struct InferOpts {
  std::string checkpoint;
  std::string image;
  double blank_threshold = -1.0;
  int threads = 0;
  std::string out;
};

void run_infer(const InferOpts& o) {
  ensure_dir(o.out);
  const uts::Checkpoint ck = uts::load_checkpoint(o.checkpoint);
  const uts::RgbImage img = uts::read_png(o.image);
  std::optional<double> blank;
  if (o.blank_threshold >= 0.0) blank = o.blank_threshold;
  uts::TileGrid grid = uts::partition(img, uts::kTileSize, blank);

  uts::parallel_chunks(grid.count(), uts::resolve_threads(o.threads),
                       [&](int, int64_t begin, int64_t end) {
                         for (int64_t i = begin; i < end; ++i) {
                           const int idx = static_cast<int>(i);
                           if (grid.excluded[static_cast<size_t>(idx)]) continue;
                           const uts::Tensor tile = uts::extract_tile(img, grid, idx);
                           const std::array<double, 3> probs =
                               uts::lvit_forward(tile, ck.params, ck.config);
                           int best = 0;
                           for (int c = 1; c < 3; ++c)
                             if (probs[static_cast<size_t>(c)] > probs[static_cast<size_t>(best)])
                               best = c;
                           grid.labels[static_cast<size_t>(idx)] = best;
                           for (int c = 0; c < 3; ++c)
                             grid.probs[static_cast<size_t>(idx) * 3 + c] =
                                 probs[static_cast<size_t>(c)];
                         }
                       });

  const std::string manifest_path = join(o.out, "pred.csv");
  uts::write_manifest(grid, manifest_path);
  const uts::ColorMask mask = uts::assemble_mask(grid);
  uts::write_png(join(o.out, "mask_raw.png"), mask.to_image());

  int counts[3] = {0, 0, 0};
  for (int i = 0; i < grid.count(); ++i)
    if (grid.has_label(i)) ++counts[grid.labels[static_cast<size_t>(i)]];
  std::printf("labeled %d tiles (tumor %d, stroma %d, fat %d) -> %s\n", grid.count(), counts[0],
              counts[1], counts[2], o.out.c_str());
}

// ---------------------------------------------------------------------------
// refine
// ---------------------------------------------------------------------------

struct RefineOpts {
  std::string mask;
  std::string image;
  int window = 48;
  double alpha = 0.5;
  bool freeze_excluded = false;
  bool black_class = false;
  std::string out;
};

void run_refine(const RefineOpts& o) {
  ensure_dir(o.out);
  const uts::RgbImage mask_img = uts::read_png(o.mask);
  uts::RgbImage img = uts::read_png(o.image);
  // the raw mask covers only whole tiles; crop the source to match
  if (img.width != mask_img.width || img.height != mask_img.height) {
    if (img.width < mask_img.width || img.height < mask_img.height)
      throw uts::InputError("image " + std::to_string(img.width) + "x" +
                            std::to_string(img.height) + " smaller than mask " +
                            std::to_string(mask_img.width) + "x" +
                            std::to_string(mask_img.height));
    uts::RgbImage crop(mask_img.width, mask_img.height);
    for (int y = 0; y < crop.height; ++y)
      for (int x = 0; x < crop.width; ++x) crop.set(x, y, img.get(x, y));
    img = crop;
  }
  const uts::ColorMask raw = uts::ColorMask::from_image(mask_img);
  uts::RefineOptions ropt;
  ropt.window = o.window;
  ropt.alpha = o.alpha;
  ropt.freeze_excluded = o.freeze_excluded;
  ropt.black_class = o.black_class;
  const uts::RefineResult res = uts::refine_pipeline(raw, img, uts::default_palette(), ropt);
  uts::write_png(join(o.out, "mask_refined.png"), res.discrete.to_image());
  uts::write_png(join(o.out, "overlay.png"), res.overlaid);
  std::printf("separable pass: %.1f multiply-adds per pixel-channel vs %.0f direct (window %d)\n",
              res.stats.ops_per_pixel_channel(), res.direct_ops_per_pixel, o.window);
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

struct EvalOpts {
  std::string pred;
  std::string truth;
  std::string out;
};

void run_eval(const EvalOpts& o) {
  const uts::TileGrid pred = uts::read_manifest(o.pred);
  const uts::TileGrid truth = uts::read_manifest(o.truth);
  if (pred.cols != truth.cols || pred.rows != truth.rows || pred.tile_size != truth.tile_size)
    throw uts::InputError("prediction grid " + std::to_string(pred.cols) + "x" +
                          std::to_string(pred.rows) + " does not match truth grid " +
                          std::to_string(truth.cols) + "x" + std::to_string(truth.rows));
  std::vector<int> t_labels, p_labels;
  for (int i = 0; i < truth.count(); ++i) {
    if (truth.excluded[static_cast<size_t>(i)] || pred.excluded[static_cast<size_t>(i)]) continue;
    if (!truth.has_label(i) || !pred.has_label(i)) continue;
    t_labels.push_back(truth.labels[static_cast<size_t>(i)]);
    p_labels.push_back(pred.labels[static_cast<size_t>(i)]);
  }
  if (t_labels.empty()) throw uts::InputError("no tiles labeled in both manifests");
  const uts::MetricsReport rep = uts::macro_metrics(uts::confusion(t_labels, p_labels));
  std::printf("%s", rep.csv().c_str());
  std::printf("%s", rep.summary().c_str());
  if (!o.out.empty()) {
    ensure_dir(o.out);
    const std::string path = join(o.out, "metrics.csv");
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw uts::InputError("cannot write " + path);
    std::fputs(rep.csv().c_str(), f);
    std::fclose(f);
  }
}

// ---------------------------------------------------------------------------
// small reports
// ---------------------------------------------------------------------------

struct TsrOpts {
  std::string manifest;
};

void run_tsr(const TsrOpts& o) {
  const uts::TileGrid grid = uts::read_manifest(o.manifest);
  const uts::TissueRatios r = uts::tissue_ratios(grid);
  std::printf("%s\n", r.formatted().c_str());
}

struct ComplexityOpts {
  int width = 512, height = 512, tile = 32;
  int tokens = 16, embed = 64;
};

void run_complexity(const ComplexityOpts& o) {
  const uts::ComplexityReport r =
      uts::complexity_report(o.width, o.height, o.tile, o.tokens, o.embed);
  std::printf("%s", r.text().c_str());
}

struct VarianceOpts {
  int k = 3;
  double p = 0.3;
  int trials = 100000;
  uint64_t seed = 1;
};

void run_variance(const VarianceOpts& o) {
  const uts::VarianceTrialResult r = uts::variance_reduction_trial(o.k, o.p, o.trials, o.seed);
  std::printf("%s\n", r.text().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unit-based tissue segmentation pipeline", "uts"};
  app.require_subcommand(1);
  app.allow_config_extras(false);
  app.set_config("--config", "", "read defaults from a key=value config file")
      ->envname("UTS_CONFIG");

  SynthOpts synth;
  CLI::App* s_synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
  s_synth->add_option("--rois", synth.rois, "ROIs per class")->capture_default_str();
  s_synth->add_option("--width", synth.width, "ROI width in pixels")->capture_default_str();
  s_synth->add_option("--height", synth.height, "ROI height in pixels")->capture_default_str();
  s_synth->add_option("--noise", synth.noise, "per-channel jitter amplitude")
      ->capture_default_str();
  s_synth->add_option("--seed", synth.seed, "generator seed")->capture_default_str();
  s_synth->add_option("--mixed", synth.mixed,
                      "extra split-layout ROIs for refinement tests (kept out of the manifest)")
      ->capture_default_str();
  s_synth->add_option("--out", synth.out, "output directory")->required();

  TileOpts tile;
  CLI::App* s_tile = app.add_subcommand("tile", "partition an image into unit tiles");
  s_tile->add_option("--image", tile.image, "input PNG")->required();
  s_tile->add_option("--tile-size", tile.tile_size, "tile side in pixels")->capture_default_str();
  s_tile->add_option("--blank-threshold", tile.blank_threshold,
                     "mean-luminance cutoff for excluding blank tiles (negative disables)")
      ->capture_default_str();
  s_tile->add_option("--export-tiles", tile.export_dir, "also write each tile as PNG here");
  s_tile->add_option("--out", tile.out, "manifest path to write")->required();

  TrainOpts train;
  CLI::App* s_train = app.add_subcommand("train", "train a tile classifier");
  s_train->add_option("--data", train.data, "dataset manifest")->required();
  s_train->add_option("--preset", train.preset, "model configuration")
      ->check(CLI::IsMember({"backbone", "vtm", "vtm-datse", "all"}))
      ->capture_default_str();
  s_train->add_flag("--linear-attn", train.linear_attn, "use linear attention in the VTM");
  s_train->add_option("--epochs", train.epochs, "training epochs")->capture_default_str();
  s_train->add_option("--batch", train.batch, "mini-batch size")->capture_default_str();
  s_train->add_option("--lr", train.lr, "SGD learning rate")->capture_default_str();
  s_train->add_option("--seed", train.seed, "training seed")->capture_default_str();
  s_train->add_option("--threads", train.threads, "worker threads (0 = machine parallelism)")
      ->capture_default_str();
  s_train->add_option("--kfold", train.kfold, "fold count for the patient-level split")
      ->capture_default_str();
  s_train->add_option("--fold", train.fold, "held-out fold index (-1 = train on everything)")
      ->capture_default_str();
  s_train->add_option("--out", train.out, "output directory")->required();

  InferOpts infer;
  CLI::App* s_infer = app.add_subcommand("infer", "label an image's tiles with a checkpoint");
  s_infer->add_option("--checkpoint", infer.checkpoint, "trained checkpoint")->required();
  s_infer->add_option("--image", infer.image, "input PNG")->required();
  s_infer->add_option("--blank-threshold", infer.blank_threshold,
                      "mean-luminance cutoff for excluding blank tiles (negative disables)")
      ->capture_default_str();
  s_infer->add_option("--threads", infer.threads, "worker threads (0 = machine parallelism)")
      ->capture_default_str();
  s_infer->add_option("--out", infer.out, "output directory")->required();

  RefineOpts refine;
  CLI::App* s_refine = app.add_subcommand("refine", "smooth, discretize and overlay a raw mask");
  s_refine->add_option("--mask", refine.mask, "raw mask PNG")->required();
  s_refine->add_option("--image", refine.image, "source image PNG")->required();
  s_refine->add_option("--window", refine.window, "smoothing window in pixels")
      ->capture_default_str();
  s_refine->add_option("--alpha", refine.alpha, "overlay transparency")->capture_default_str();
  s_refine->add_flag("--freeze-excluded", refine.freeze_excluded,
                     "keep originally-black pixels black");
  s_refine->add_flag("--black-class", refine.black_class,
                     "let pixels discretize to black as a fourth target");
  s_refine->add_option("--out", refine.out, "output directory")->required();

  EvalOpts eval;
  CLI::App* s_eval = app.add_subcommand("eval", "score a prediction manifest against truth");
  s_eval->add_option("--pred", eval.pred, "predicted tile manifest")->required();
  s_eval->add_option("--truth", eval.truth, "ground-truth tile manifest")->required();
  s_eval->add_option("--out", eval.out, "directory for metrics.csv (optional)");

  TsrOpts tsr;
  CLI::App* s_tsr = app.add_subcommand("tsr", "tissue composition of a labeled manifest");
  s_tsr->add_option("--manifest", tsr.manifest, "labeled tile manifest")->required();

  ComplexityOpts complexity;
  CLI::App* s_cx = app.add_subcommand("complexity", "pixel-vs-unit operation accounting");
  s_cx->add_option("--width", complexity.width, "image width")->capture_default_str();
  s_cx->add_option("--height", complexity.height, "image height")->capture_default_str();
  s_cx->add_option("--tile", complexity.tile, "tile side")->capture_default_str();
  s_cx->add_option("--tokens", complexity.tokens, "token count M")->capture_default_str();
  s_cx->add_option("--embed", complexity.embed, "embedding width D")->capture_default_str();

  VarianceOpts variance;
  CLI::App* s_var = app.add_subcommand("variance-trial", "majority-vote variance reduction trial");
  s_var->add_option("--k", variance.k, "tile side (k^2 pixels per tile)")->capture_default_str();
  s_var->add_option("--p", variance.p, "pixel flip probability")->capture_default_str();
  s_var->add_option("--trials", variance.trials, "number of simulated tiles")
      ->capture_default_str();
  s_var->add_option("--seed", variance.seed, "trial seed")->capture_default_str();

  try {
    app.parse(argc, argv);
    CLI::App* active = app.get_subcommands().front();
    std::printf("config [%s]\n%s", active->get_name().c_str(),
                active->config_to_str(true, false).c_str());
    if (active == s_synth) run_synth(synth);
    else if (active == s_tile) run_tile(tile);
    else if (active == s_train) run_train(train);
    else if (active == s_infer) run_infer(infer);
    else if (active == s_refine) run_refine(refine);
    else if (active == s_eval) run_eval(eval);
    else if (active == s_tsr) run_tsr(tsr);
    else if (active == s_cx) run_complexity(complexity);
    else if (active == s_var) run_variance(variance);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const uts::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
