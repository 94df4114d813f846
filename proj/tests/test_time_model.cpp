#include <gtest/gtest.h>

#include <cmath>

#include "test_support.hpp"

namespace fedplace {
namespace {

// Negative at m = 1, so generated records start at m = 2.
double generator(double m) { return 0.05 * m + 2.0 * std::log(0.5 * m) + 1.0; }

std::vector<TrainingRecord> records_from(const std::vector<std::pair<double, double>>& pts,
                                         const std::string& type = "g") {
  std::vector<TrainingRecord> out;
  for (const auto& [m, y] : pts) out.push_back({0, static_cast<std::uint64_t>(m), y, type, 0, 0});
  return out;
}

TEST(Predict, Examples) {
  EXPECT_DOUBLE_EQ(predict_time(TimeModelFit{"g", 1, 0, 1, 0}, 7), 7.0);
  EXPECT_DOUBLE_EQ(predict_time(TimeModelFit{"g", 0.5, 1, 1, 2}, 1), 2.5);
}

TEST(Predict, ClampsBelowOneBatchAndNeverNegative) {
  const TimeModelFit f{"g", 0.5, 1, 1, 2};
  EXPECT_DOUBLE_EQ(predict_time(f, 0.2), predict_time(f, 1.0));
  EXPECT_DOUBLE_EQ(predict_time(TimeModelFit{"g", 0.0, 0.0, 1.0, -3.0}, 5), kMinPredictedTime);
}

TEST(Fit, NoiselessRecovery) {
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 100; ++i) {
    const double m = 2.0 + std::floor(498.0 * i / 99.0);
    pts.emplace_back(m, generator(m));
  }
  const auto fit = fit_time_model(records_from(pts));
  EXPECT_FALSE(fit.linear_fallback);
  for (const auto& [m, y] : pts) EXPECT_NEAR(predict_time(fit, m), y, 1e-3 * y) << "m=" << m;
}

TEST(Fit, PureLinearData) {
  std::vector<std::pair<double, double>> pts;
  for (int m = 1; m <= 100; ++m) pts.emplace_back(m, 2.0 * m);
  const auto fit = fit_time_model(records_from(pts));
  for (int m = 1; m <= 100; ++m) EXPECT_NEAR(predict_time(fit, m), 2.0 * m, 0.01 * 2.0 * m);
}

TEST(Fit, NoisyHeldOutMseWithinTwiceNoiseFloor) {
  Rng rng = Rng::stream(21, StreamTag::kTrainingTime);
  std::vector<std::pair<double, double>> train;
  for (int i = 0; i < 500; ++i) {
    const double m = 2.0 + static_cast<double>(rng.below(499));
    train.emplace_back(m, generator(m) * (1.0 + rng.normal(0.0, 0.01)));
  }
  const auto fit = fit_time_model(records_from(train));
  double mse = 0, floor = 0;
  const int held_out = 2000;
  for (int i = 0; i < held_out; ++i) {
    const double m = 2.0 + static_cast<double>(rng.below(499));
    const double truth = generator(m);
    const double y = truth * (1.0 + rng.normal(0.0, 0.01));
    mse += std::pow(predict_time(fit, m) - y, 2);
    floor += std::pow(0.01 * truth, 2);
  }
  EXPECT_LE(mse / held_out, 2.0 * floor / held_out);
}

TEST(Fit, DecreasingDataFallsBackToFlatLine) {
  std::vector<std::pair<double, double>> pts;
  for (int m = 1; m <= 40; ++m) pts.emplace_back(m, 100.0 - m);
  const auto fit = fit_time_model(records_from(pts));
  EXPECT_GE(fit.a, 0.0);
  for (int m = 1; m <= 100000; m *= 3) EXPECT_GT(predict_time(fit, m), 0.0);
}

TEST(Fit, AcceptedFitsArePositiveOnTheWholeRange) {
  Rng rng(5);
  for (int trial = 0; trial < 60; ++trial) {
    const double a = rng.uniform(0, 0.5), b = rng.uniform(0, 3), c = rng.uniform(0.2, 2), d = rng.uniform(0.1, 3);
    const double sigma = rng.uniform(0, 0.5);
    std::vector<std::pair<double, double>> pts;
    const int n = 4 + static_cast<int>(rng.below(200));
    for (int i = 0; i < n; ++i) {
      const double m = 1.0 + static_cast<double>(rng.below(300));
      const double mean = a * m + b * std::log(c * m) + d;
      pts.emplace_back(m, std::max(1e-3, mean * (1.0 + rng.normal(0.0, sigma))));
    }
    const auto fit = fit_time_model(records_from(pts));
    EXPECT_GE(fit.a, 0.0);
    for (double m = 1; m <= 1e5; m *= 1.1) ASSERT_GT(predict_time(fit, m), 0.0) << "trial " << trial << " m=" << m;
    for (double m = fit.min_m; m <= fit.max_m; m += 1.0) {
      ASSERT_GT(evaluate_curve(fit.a, fit.b, fit.c, fit.d, m), 0.0) << "trial " << trial << " m=" << m;
    }
  }
}

TEST(Fit, CurveMinimumMatchesScan) {
  Rng rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    const double a = rng.uniform(0, 1), b = rng.uniform(-5, 5), c = rng.uniform(0.1, 3), d = rng.uniform(-3, 3);
    const double hi = 1.0 + rng.uniform(0, 200);
    double scan = evaluate_curve(a, b, c, d, hi);
    for (double m = 1.0; m <= hi; m += 1e-3) scan = std::min(scan, evaluate_curve(a, b, c, d, m));
    ASSERT_LE(curve_minimum(a, b, c, d, 1.0, hi), scan + 1e-12);
    ASSERT_NEAR(curve_minimum(a, b, c, d, 1.0, hi), scan, 1e-5);
  }
}

TEST(Fit, ErrorCases) {
  EXPECT_THROW(fit_time_model(records_from({{1, 1}, {2, 2}, {3, 3}})), InsufficientDataError);
  auto mixed = records_from({{1, 1}, {2, 2}, {3, 3}, {4, 4}});
  mixed[2].gpu_type = "other";
  EXPECT_THROW(fit_time_model(mixed), DomainError);
  auto bad = records_from({{1, 1}, {2, 2}, {3, 3}, {4, 4}});
  bad[1].observed_time = 0.0;
  EXPECT_THROW(fit_time_model(bad), DomainError);
}

TEST(Fit, FourPointsIsEnough) {
  const auto fit = fit_time_model(records_from({{1, 1.1}, {2, 2.0}, {5, 5.2}, {9, 8.8}}));
  EXPECT_EQ(fit.num_points, 4u);
  EXPECT_GT(predict_time(fit, 3), 0.0);
}

TEST(RecordStore, WindowDropsOldRounds) {
  RecordStore store(2);
  auto round = [](std::uint64_t r, std::size_t n) {
    std::map<std::string, std::vector<TrainingRecord>> m;
    for (std::size_t i = 0; i < n; ++i) m["g"].push_back({0, 1 + i, 1.0 + i, "g", r, 0});
    return m;
  };
  store.append_round(0, round(0, 3));
  store.append_round(1, round(1, 4));
  EXPECT_EQ(store.total_records(), 7u);
  store.append_round(2, round(2, 5));
  EXPECT_EQ(store.total_records(), 9u);
  for (const auto& r : *store.records("g")) EXPECT_GE(r.round_index, 1u);
}

TEST(RecordStore, FitAllSkipsThinKeys) {
  RecordStore store;
  std::map<std::string, std::vector<TrainingRecord>> m;
  for (int i = 1; i <= 6; ++i) m["a"].push_back({0, static_cast<std::uint64_t>(i), 2.0 * i, "a", 0, 0});
  for (int i = 1; i <= 3; ++i) m["b"].push_back({0, static_cast<std::uint64_t>(i), 1.0 * i, "b", 0, 1});
  store.append_round(0, m);
  const auto fits = store.fit_all();
  EXPECT_TRUE(fits.contains("a"));
  EXPECT_FALSE(fits.contains("b"));
  EXPECT_EQ(store.records("c"), nullptr);
}

TEST(FitKey, PoolingModes) {
  const WorkerSpec w{3, 1, "a40-like", 2};
  EXPECT_EQ(fit_key(w, FitPooling::kGpuType), "a40-like");
  EXPECT_EQ(fit_key(w, FitPooling::kPhysicalGpu), "a40-like@1:2");
}

}  // namespace
}  // namespace fedplace
