#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "uts/metrics.hpp"
#include "uts/rng.hpp"

using namespace uts;

namespace {

TileGrid grid_with_labels(const std::vector<int>& labels) {
  TileGrid g = make_empty_grid(kTileSize * static_cast<int>(labels.size()), kTileSize);
  for (size_t i = 0; i < labels.size(); ++i) g.labels[i] = labels[i];
  return g;
}

ConfusionMatrix random_cm(uint64_t seed) {
  Rng rng(seed);
  ConfusionMatrix cm;
  for (auto& row : cm.counts)
    for (auto& v : row) v = rng.uniform_int(10);
  return cm;
}

// expand a matrix back into label pairs, then measure per-class IoU with
// plain set arithmetic over tile indices
double set_iou(const ConfusionMatrix& cm, int cls) {
  std::vector<int> truth, pred;
  for (int t = 0; t < kNumClasses; ++t)
    for (int p = 0; p < kNumClasses; ++p)
      for (int64_t i = 0; i < cm.counts[static_cast<size_t>(t)][static_cast<size_t>(p)]; ++i) {
        truth.push_back(t);
        pred.push_back(p);
      }
  int64_t inter = 0, uni = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    const bool in_t = truth[i] == cls, in_p = pred[i] == cls;
    if (in_t && in_p) ++inter;
    if (in_t || in_p) ++uni;
  }
  return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : std::nan("");
}

double binom_tail(int n, int kmin, double p) {
  double sum = 0.0;
  for (int i = kmin; i <= n; ++i) {
    double c = 1.0;
    for (int j = 0; j < i; ++j) c = c * (n - j) / (j + 1);
    sum += c * std::pow(p, i) * std::pow(1.0 - p, n - i);
  }
  return sum;
}

}  // namespace

TEST_CASE("confusion tallies label pairs", "[metrics]") {
  ConfusionMatrix cm = confusion({0, 0, 1, 2, 2, 1}, {0, 1, 1, 2, 0, 1});
  CHECK(cm.counts[0][0] == 1);
  CHECK(cm.counts[0][1] == 1);
  CHECK(cm.counts[1][1] == 2);
  CHECK(cm.counts[2][2] == 1);
  CHECK(cm.counts[2][0] == 1);
  CHECK(cm.counts[1][0] == 0);
  CHECK(cm.total() == 6);
  CHECK(cm.row_sum(0) == 2);
  CHECK(cm.col_sum(1) == 3);

  CHECK(confusion({}, {}).total() == 0);

  ConfusionMatrix diag = confusion({0, 1, 2, 1}, {0, 1, 2, 1});
  for (int t = 0; t < 3; ++t)
    for (int p = 0; p < 3; ++p)
      CHECK(diag.counts[static_cast<size_t>(t)][static_cast<size_t>(p)] ==
            (t == p ? (t == 1 ? 2 : 1) : 0));

  CHECK_THROWS_AS(confusion({0, 1}, {0}), InputError);
  CHECK_THROWS_AS(confusion({3}, {0}), InputError);
  CHECK_THROWS_AS(confusion({0}, {-1}), InputError);
}

TEST_CASE("perfect predictions score 1.0 on every metric", "[metrics]") {
  ConfusionMatrix cm;
  for (int c = 0; c < 3; ++c) cm.counts[static_cast<size_t>(c)][static_cast<size_t>(c)] = 5;
  MetricsReport rep = macro_metrics(cm);
  for (int m = 0; m < MetricsReport::kMetricCount; ++m) {
    CHECK(rep.macro_value[m] == 1.0);
    for (int c = 0; c < 3; ++c) CHECK(rep.per_class[m][c] == 1.0);
  }
}

TEST_CASE("single-class predictions on a balanced set", "[metrics]") {
  MetricsReport rep = macro_metrics(confusion({0, 0, 1, 1, 2, 2}, {0, 0, 0, 0, 0, 0}));
  CHECK(rep.macro_value[MetricsReport::kRecall] == Catch::Approx(1.0 / 3).epsilon(1e-12));
  // precision: 1/3 for tumor, empty denominators contribute 0 for the others
  CHECK(rep.macro_value[MetricsReport::kPrecision] == Catch::Approx(1.0 / 9).epsilon(1e-12));
}

TEST_CASE("IoU agrees with the set-arithmetic oracle", "[metrics]") {
  ConfusionMatrix cm;
  const int64_t rows[3][3] = {{4, 1, 0}, {1, 3, 1}, {0, 1, 4}};
  for (int t = 0; t < 3; ++t)
    for (int p = 0; p < 3; ++p) cm.counts[static_cast<size_t>(t)][static_cast<size_t>(p)] = rows[t][p];
  MetricsReport rep = macro_metrics(cm);
  double macro = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double oracle = set_iou(cm, c);
    CHECK(rep.per_class[MetricsReport::kIou][c] == Catch::Approx(oracle).epsilon(1e-12));
    macro += oracle;
  }
  CHECK(rep.macro_value[MetricsReport::kIou] == Catch::Approx(macro / 3).epsilon(1e-12));
}

TEST_CASE("dsc and iou are tied per class", "[metrics]") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    ConfusionMatrix cm = random_cm(seed);
    if (cm.total() == 0) continue;
    MetricsReport rep = macro_metrics(cm);
    for (int c = 0; c < 3; ++c) {
      const double iou = rep.per_class[MetricsReport::kIou][c];
      const double dsc = rep.per_class[MetricsReport::kDsc][c];
      if (std::isnan(iou)) {
        CHECK(std::isnan(dsc));
      } else {
        CHECK(dsc == Catch::Approx(2.0 * iou / (1.0 + iou)).margin(1e-12));
      }
    }
  }
}

TEST_CASE("macro metrics ignore class relabeling", "[metrics]") {
  ConfusionMatrix cm = random_cm(42);
  MetricsReport base = macro_metrics(cm);
  const int perms[2][3] = {{1, 2, 0}, {2, 1, 0}};
  for (const int* s : perms) {
    ConfusionMatrix pm;
    for (int t = 0; t < 3; ++t)
      for (int p = 0; p < 3; ++p)
        pm.counts[static_cast<size_t>(s[t])][static_cast<size_t>(s[p])] =
            cm.counts[static_cast<size_t>(t)][static_cast<size_t>(p)];
    MetricsReport rep = macro_metrics(pm);
    for (int m = 0; m < MetricsReport::kMetricCount; ++m)
      CHECK(rep.macro_value[m] == Catch::Approx(base.macro_value[m]).margin(1e-12));
  }
}

TEST_CASE("zero-denominator rule", "[metrics]") {
  // fat absent from ground truth and never predicted: drops out of the mean
  ConfusionMatrix absent;
  absent.counts[0][0] = 3;
  absent.counts[1][1] = 3;
  MetricsReport rep = macro_metrics(absent);
  CHECK(std::isnan(rep.per_class[MetricsReport::kRecall][2]));
  CHECK(std::isnan(rep.per_class[MetricsReport::kIou][2]));
  CHECK(rep.macro_value[MetricsReport::kRecall] == 1.0);
  CHECK(rep.macro_value[MetricsReport::kIou] == 1.0);

  // fat present but never predicted: scores 0 and stays in the mean
  ConfusionMatrix missed = absent;
  missed.counts[2][0] = 2;
  MetricsReport rep2 = macro_metrics(missed);
  CHECK(rep2.per_class[MetricsReport::kRecall][2] == 0.0);
  CHECK(rep2.per_class[MetricsReport::kPrecision][2] == 0.0);  // empty denominator
  CHECK(rep2.macro_value[MetricsReport::kRecall] == Catch::Approx(2.0 / 3).epsilon(1e-12));

  ConfusionMatrix empty;
  CHECK_THROWS_AS(macro_metrics(empty), InputError);
}

TEST_CASE("metrics report renders both formats", "[metrics]") {
  ConfusionMatrix cm;
  cm.counts[0][0] = 1;
  cm.counts[1][1] = 1;
  MetricsReport rep = macro_metrics(cm);
  const std::string csv = rep.csv();
  CHECK(csv.find("metric,tumor,stroma,fat,macro") == 0);
  CHECK(csv.find(",na") != std::string::npos);  // fat column is absent
  CHECK(rep.summary().find("macro accuracy") != std::string::npos);
}

TEST_CASE("tissue ratios with exact splits", "[metrics]") {
  TissueRatios r = tissue_ratios(grid_with_labels({0, 0, 1, 2}));
  CHECK(r.tile_counts[0] == 2);
  CHECK(r.percent(0) == 50.0);
  CHECK(r.percent(1) == 25.0);
  CHECK(r.percent(2) == 25.0);
  CHECK(r.formatted() == "Tumor: 50.00%, Stroma: 25.00%, Fat: 25.00%");

  TissueRatios fat = tissue_ratios(grid_with_labels({2, 2, 2}));
  CHECK(fat.formatted() == "Tumor: 0.00%, Stroma: 0.00%, Fat: 100.00%");
}

TEST_CASE("largest-remainder rounding always sums to 100.00", "[metrics]") {
  // thirds: the leftover hundredth goes to the lowest class index on a tie
  TissueRatios thirds = tissue_ratios(grid_with_labels({0, 1, 2}));
  CHECK(thirds.hundredths[0] == 3334);
  CHECK(thirds.hundredths[1] == 3333);
  CHECK(thirds.hundredths[2] == 3333);

  const std::vector<std::array<int, 3>> combos = {
      {1, 1, 1}, {2, 1, 0}, {5, 3, 9}, {1, 2, 4}, {7, 11, 13}, {153, 153, 153}, {1, 0, 0}};
  for (const auto& c : combos) {
    std::vector<int> labels;
    for (int cls = 0; cls < 3; ++cls)
      for (int i = 0; i < c[static_cast<size_t>(cls)]; ++i) labels.push_back(cls);
    TissueRatios r = tissue_ratios(grid_with_labels(labels));
    CHECK(r.hundredths[0] + r.hundredths[1] + r.hundredths[2] == 10000);
  }
}

TEST_CASE("tissue ratios skip excluded and unlabeled tiles", "[metrics]") {
  TileGrid g = grid_with_labels({0, 1, -1});
  g.excluded[0] = 1;  // the tumor tile is excluded
  TissueRatios r = tissue_ratios(g);
  CHECK(r.percent(0) == 0.0);
  CHECK(r.percent(1) == 100.0);

  TileGrid none = grid_with_labels({-1, -1});
  CHECK_THROWS_AS(tissue_ratios(none), InputError);
  TileGrid all_excluded = grid_with_labels({0});
  all_excluded.excluded[0] = 1;
  CHECK_THROWS_AS(tissue_ratios(all_excluded), InputError);
}

TEST_CASE("complexity accounting", "[metrics]") {
  ComplexityReport r = complexity_report(512, 512, 32);
  CHECK(r.pixel_ops == 262144);
  CHECK(r.unit_ops == 256);
  CHECK(r.ratio == 1024.0);
  CHECK(r.unit_cost_term == 16.0);  // 16^2 * 64 / 32^2

  CHECK(complexity_report(32, 32, 32).unit_ops == 1);
  CHECK(complexity_report(32, 32, 32).ratio == 1024.0);
  CHECK(complexity_report(96, 96, 32).unit_ops == 9);
  CHECK(complexity_report(96, 96, 32).ratio == 1024.0);

  CHECK_THROWS_AS(complexity_report(16, 16, 32), InputError);
  CHECK_THROWS_AS(complexity_report(0, 32, 32), InputError);
}

TEST_CASE("variance trial degenerate cases", "[metrics]") {
  VarianceTrialResult k1 = variance_reduction_trial(1, 0.2, 20000, 7);
  CHECK(k1.tile_error_rate == k1.pixel_error_rate);  // one pixel is the tile

  VarianceTrialResult clean = variance_reduction_trial(3, 0.0, 1000, 7);
  CHECK(clean.pixel_error_rate == 0.0);
  CHECK(clean.tile_error_rate == 0.0);
  CHECK(clean.avg_label_variance == 0.0);
  CHECK(clean.bound_satisfied);

  CHECK_THROWS_AS(variance_reduction_trial(3, 0.5, 100, 7), InputError);
  CHECK_THROWS_AS(variance_reduction_trial(3, -0.1, 100, 7), InputError);
  CHECK_THROWS_AS(variance_reduction_trial(0, 0.1, 100, 7), InputError);
  CHECK_THROWS_AS(variance_reduction_trial(3, 0.1, 0, 7), InputError);
}

TEST_CASE("majority vote matches the binomial tail", "[metrics]") {
  VarianceTrialResult res = variance_reduction_trial(3, 0.3, 100000, 99);
  const double oracle = binom_tail(9, 5, 0.3);  // majority of 9 pixels flipped
  CHECK(oracle == Catch::Approx(0.09880866).margin(1e-6));
  CHECK(res.tile_error_rate == Catch::Approx(oracle).margin(0.005));
  CHECK(res.pixel_error_rate == Catch::Approx(0.3).margin(0.005));
  CHECK(res.bound_satisfied);
}

TEST_CASE("averaging shrinks both error and variance", "[metrics]") {
  for (int k : {3, 5})
    for (double p : {0.1, 0.3}) {
      DYNAMIC_SECTION("k " << k << " p " << p) {
        VarianceTrialResult res =
            variance_reduction_trial(k, p, 100000, static_cast<uint64_t>(k * 100) + 1);
        CHECK(res.tile_error_rate < res.pixel_error_rate);
        CHECK(res.avg_label_variance < res.pixel_variance);
        CHECK(res.bound_satisfied);
      }
    }
}
