#pragma once

// Tile-level evaluation: confusion matrix, one-vs-rest macro metrics,
// tissue-ratio reporting, the pixel-vs-unit operation count, and the
// majority-vote variance trial.

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "uts/error.hpp"
#include "uts/mask.hpp"
#include "uts/rng.hpp"
#include "uts/tiling.hpp"

namespace uts {

struct ConfusionMatrix {
  std::array<std::array<int64_t, kNumClasses>, kNumClasses> counts{};  // [true][pred]

  int64_t total() const {
    int64_t t = 0;
    for (const auto& row : counts)
      for (int64_t v : row) t += v;
    return t;
  }
  int64_t row_sum(int c) const {
    int64_t t = 0;
    for (int64_t v : counts[static_cast<size_t>(c)]) t += v;
    return t;
  }
  int64_t col_sum(int c) const {
    int64_t t = 0;
    for (const auto& row : counts) t += row[static_cast<size_t>(c)];
    return t;
  }
};

inline ConfusionMatrix confusion(const std::vector<int>& truth, const std::vector<int>& pred) {
  if (truth.size() != pred.size())
    throw InputError("confusion: " + std::to_string(truth.size()) + " true labels vs " +
                     std::to_string(pred.size()) + " predictions");
  ConfusionMatrix cm;
  for (size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = pred[i];
    if (t < 0 || t >= kNumClasses || p < 0 || p >= kNumClasses)
      throw InputError("confusion: label out of range at position " + std::to_string(i));
    ++cm.counts[static_cast<size_t>(t)][static_cast<size_t>(p)];
  }
  return cm;
}

// NaN in a per-class slot means the class is excluded from that macro mean
// (zero-denominator rule: classes absent from ground truth drop out; classes
// present but with an empty denominator contribute 0).
struct MetricsReport {
  enum Metric { kAccuracy, kRecall, kPrecision, kSpecificity, kDsc, kIou, kMetricCount };
  static const char* metric_name(int m) {
    static const char* names[kMetricCount] = {"accuracy", "recall",    "precision",
                                              "specificity", "dsc", "iou"};
    return names[m];
  }

  double per_class[kMetricCount][kNumClasses] = {};
  double macro_value[kMetricCount] = {};

  std::string csv() const {
    std::string out = "metric,tumor,stroma,fat,macro\n";
    char buf[64];
    for (int m = 0; m < kMetricCount; ++m) {
      out += metric_name(m);
      for (int c = 0; c < kNumClasses; ++c) {
        if (std::isnan(per_class[m][c])) {
          out += ",na";
        } else {
          std::snprintf(buf, sizeof buf, ",%.6f", per_class[m][c]);
          out += buf;
        }
      }
      std::snprintf(buf, sizeof buf, ",%.6f\n", macro_value[m]);
      out += buf;
    }
    return out;
  }

  std::string summary() const {
    char buf[256];
    std::string out;
    for (int m = 0; m < kMetricCount; ++m) {
      std::snprintf(buf, sizeof buf, "macro %-11s %.4f\n", metric_name(m), macro_value[m]);
      out += buf;
    }
    return out;
  }
};

inline MetricsReport macro_metrics(const ConfusionMatrix& cm) {
  const int64_t total = cm.total();
  if (total == 0) throw InputError("macro_metrics: empty confusion matrix");
  const double nan = std::nan("");
  MetricsReport rep;
  for (int c = 0; c < kNumClasses; ++c) {
    const double tp = static_cast<double>(cm.counts[static_cast<size_t>(c)][static_cast<size_t>(c)]);
    const double fn = static_cast<double>(cm.row_sum(c)) - tp;
    const double fp = static_cast<double>(cm.col_sum(c)) - tp;
    const double tn = static_cast<double>(total) - tp - fn - fp;
    const bool in_gt = cm.row_sum(c) > 0;
    auto rate = [&](double num, double den) {
      if (den > 0.0) return num / den;
      return in_gt ? 0.0 : nan;
    };
    rep.per_class[MetricsReport::kAccuracy][c] = (tp + tn) / static_cast<double>(total);
    rep.per_class[MetricsReport::kRecall][c] = rate(tp, tp + fn);
    rep.per_class[MetricsReport::kPrecision][c] = rate(tp, tp + fp);
    rep.per_class[MetricsReport::kSpecificity][c] = rate(tn, tn + fp);
    rep.per_class[MetricsReport::kDsc][c] = rate(2.0 * tp, 2.0 * tp + fp + fn);
    rep.per_class[MetricsReport::kIou][c] = rate(tp, tp + fp + fn);
  }
  for (int m = 0; m < MetricsReport::kMetricCount; ++m) {
    double sum = 0.0;
    int n = 0;
    for (int c = 0; c < kNumClasses; ++c)
      if (!std::isnan(rep.per_class[m][c])) {
        sum += rep.per_class[m][c];
        ++n;
      }
    rep.macro_value[m] = n > 0 ? sum / n : 0.0;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Tissue ratios with largest-remainder rounding to two decimals
// ---------------------------------------------------------------------------

struct TissueRatios {
  std::array<int64_t, kNumClasses> tile_counts{};
  std::array<int64_t, kNumClasses> hundredths{};  // percentage * 100, sums to 10000

  double percent(int c) const { return hundredths[static_cast<size_t>(c)] / 100.0; }

  std::string formatted() const {
    char buf[128];
    std::snprintf(buf, sizeof buf, "Tumor: %.2f%%, Stroma: %.2f%%, Fat: %.2f%%", percent(0),
                  percent(1), percent(2));
    return buf;
  }
};

inline TissueRatios tissue_ratios(const TileGrid& grid) {
  TissueRatios r;
  int64_t total = 0;
  for (int i = 0; i < grid.count(); ++i) {
    if (grid.excluded[static_cast<size_t>(i)] || !grid.has_label(i)) continue;
    ++r.tile_counts[static_cast<size_t>(grid.labels[static_cast<size_t>(i)])];
    ++total;
  }
  if (total == 0) throw InputError("tissue_ratios: no included labeled tiles");
  // floor to hundredths, then hand the leftover hundredths to the largest
  // remainders (ties to the lower class index)
  std::array<int64_t, kNumClasses> rem{};
  int64_t assigned = 0;
  for (int c = 0; c < kNumClasses; ++c) {
    const int64_t scaled = r.tile_counts[static_cast<size_t>(c)] * 10000;
    r.hundredths[static_cast<size_t>(c)] = scaled / total;
    rem[static_cast<size_t>(c)] = scaled % total;
    assigned += r.hundredths[static_cast<size_t>(c)];
  }
  int64_t leftover = 10000 - assigned;
  while (leftover > 0) {
    int best = 0;
    for (int c = 1; c < kNumClasses; ++c)
      if (rem[static_cast<size_t>(c)] > rem[static_cast<size_t>(best)]) best = c;
    ++r.hundredths[static_cast<size_t>(best)];
    rem[static_cast<size_t>(best)] = -1;
    --leftover;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Pixel-vs-unit operation accounting
// ---------------------------------------------------------------------------

struct ComplexityReport {
  int64_t pixel_ops = 0;      // width * height
  int64_t unit_ops = 0;       // full tiles
  double ratio = 0.0;         // pixel_ops / unit_ops
  int tokens_m = 0, embed_d = 0, tile_k = 0;
  double unit_cost_term = 0.0;  // M^2 * D / k^2

  std::string text() const {
    char buf[256];
    std::string out;
    std::snprintf(buf, sizeof buf, "pixel ops          %lld\n",
                  static_cast<long long>(pixel_ops));
    out += buf;
    std::snprintf(buf, sizeof buf, "unit ops           %lld\n",
                  static_cast<long long>(unit_ops));
    out += buf;
    std::snprintf(buf, sizeof buf, "reduction ratio    %.0f\n", ratio);
    out += buf;
    std::snprintf(buf, sizeof buf, "unit cost M^2*D/k^2 = %d^2*%d/%d^2 = %.1f\n", tokens_m,
                  embed_d, tile_k, unit_cost_term);
    out += buf;
    return out;
  }
};

inline ComplexityReport complexity_report(int width, int height, int k, int tokens_m = 16,
                                          int embed_d = 64) {
  if (width < 1 || height < 1 || k < 1) throw InputError("complexity_report: bad dimensions");
  ComplexityReport r;
  r.pixel_ops = static_cast<int64_t>(width) * height;
  r.unit_ops = static_cast<int64_t>(width / k) * (height / k);
  if (r.unit_ops == 0) throw InputError("complexity_report: image smaller than one tile");
  r.ratio = static_cast<double>(r.pixel_ops) / static_cast<double>(r.unit_ops);
  r.tokens_m = tokens_m;
  r.embed_d = embed_d;
  r.tile_k = k;
  r.unit_cost_term = static_cast<double>(tokens_m) * tokens_m * embed_d / (static_cast<double>(k) * k);
  return r;
}

// ---------------------------------------------------------------------------
// Majority-vote variance trial
// ---------------------------------------------------------------------------

struct VarianceTrialResult {
  double pixel_error_rate = 0.0;
  double tile_error_rate = 0.0;
  double pixel_variance = 0.0;      // empirical, over all pixel draws
  double avg_label_variance = 0.0;  // empirical, over per-tile mean labels
  double bound_rhs = 0.0;           // pixel_variance/k^2 + 3*SE
  bool bound_satisfied = false;

  std::string text() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "pixel error %.6f  tile error %.6f  pixel var %.6f  mean-label var %.8f  "
                  "bound rhs %.8f  bound %s",
                  pixel_error_rate, tile_error_rate, pixel_variance, avg_label_variance,
                  bound_rhs, bound_satisfied ? "holds" : "VIOLATED");
    return buf;
  }
};

// Each trial draws k^2 iid noisy binary pixel labels (true label 0, flip
// probability p) and takes the majority; a tie counts as an error. The
// variance comparison checks Var[mean label] against Var[pixel]/k^2 plus
// three standard errors of the variance estimate.
inline VarianceTrialResult variance_reduction_trial(int k, double p, int trials, uint64_t seed) {
  if (k < 1) throw InputError("variance trial: k must be >= 1");
  if (p < 0.0 || p >= 0.5)
    throw InputError("variance trial: flip probability must be in [0, 0.5)");
  if (trials < 1) throw InputError("variance trial: trials must be >= 1");

  const int n = k * k;
  Rng rng(seed);
  std::vector<double> means;
  means.reserve(static_cast<size_t>(trials));
  int64_t flipped_total = 0, wrong_tiles = 0;
  for (int t = 0; t < trials; ++t) {
    int flips = 0;
    for (int i = 0; i < n; ++i)
      if (rng.bernoulli(p)) ++flips;
    flipped_total += flips;
    if (2 * flips >= n) ++wrong_tiles;  // majority flipped, or exact tie
    means.push_back(static_cast<double>(flips) / n);
  }

  VarianceTrialResult res;
  const double draws = static_cast<double>(trials) * n;
  const double phat = static_cast<double>(flipped_total) / draws;
  res.pixel_error_rate = phat;
  res.tile_error_rate = static_cast<double>(wrong_tiles) / trials;
  res.pixel_variance = phat * (1.0 - phat);

  double mean = 0.0;
  for (double m : means) mean += m;
  mean /= trials;
  double var = 0.0, m4 = 0.0;
  for (double m : means) {
    const double d = m - mean;
    var += d * d;
    m4 += d * d * d * d;
  }
  var /= trials;
  m4 /= trials;
  res.avg_label_variance = var;
  // standard error of the sample variance: sqrt((m4 - var^2)/trials)
  const double se = std::sqrt(std::max(0.0, (m4 - var * var) / trials));
  res.bound_rhs = res.pixel_variance / n + 3.0 * se;
  res.bound_satisfied = res.avg_label_variance <= res.bound_rhs;
  return res;
}

}  // namespace uts
