#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "oracles.hpp"
#include "qsel/data.hpp"
#include "qsel/errors.hpp"
#include "qsel/timestamp.hpp"

using qsel::Matrix;
using qsel::SeriesFrame;

TEST(Timestamp, ParsesCommonForms) {
  const auto a = qsel::parse_timestamp("2016-07-01 00:00:00");
  ASSERT_TRUE(a);
  EXPECT_EQ(*a, 1467331200);
  EXPECT_EQ(qsel::parse_timestamp("2016/07/01 00:00"), a);
  EXPECT_EQ(qsel::parse_timestamp("2016-07-01T00:00:00"), a);
  EXPECT_EQ(qsel::parse_timestamp("2016-07-01"), a);
  EXPECT_EQ(qsel::format_timestamp(*a + 3661), "2016-07-01 01:01:01");
}

TEST(Timestamp, RejectsMalformed) {
  EXPECT_FALSE(qsel::parse_timestamp(""));
  EXPECT_FALSE(qsel::parse_timestamp("2016-13-01 00:00:00"));
  EXPECT_FALSE(qsel::parse_timestamp("2016-02-30"));
  EXPECT_FALSE(qsel::parse_timestamp("2016-07-01 25:00:00"));
  EXPECT_FALSE(qsel::parse_timestamp("yesterday"));
}

TEST(Timestamp, RoundTripAcrossLeapYears) {
  for (qsel::Instant t = -86400LL * 800; t < 86400LL * 20000; t += 86400LL * 37 + 1234) {
    EXPECT_EQ(qsel::parse_timestamp(qsel::format_timestamp(t)), t);
  }
}

TEST(LoadCsv, EttStyleHeader) {
  const std::string text =
      "date,HUFL,HULL,MUFL,MULL,LUFL,LULL,OT\n"
      "2016-07-01 00:00:00,5.827,2.009,1.599,0.462,4.203,1.340,30.531\n"
      "2016-07-01 01:00:00,5.693,2.076,1.492,0.426,4.142,1.371,27.787\n"
      "2016-07-01 02:00:00,5.157,1.741,1.279,0.355,3.777,1.218,27.787\n";
  const SeriesFrame f = qsel::parse_series_csv(text);
  EXPECT_EQ(f.rows(), 3u);
  EXPECT_EQ(f.values.cols(), 7u);
  EXPECT_EQ(f.feature_names[f.target_index], "OT");
  EXPECT_DOUBLE_EQ(f.values(1, 6), 27.787);
}

TEST(LoadCsv, TargetSelection) {
  const std::string text = "date,a,b\n2020-01-01,1,2\n2020-01-02,3,4\n";
  EXPECT_EQ(qsel::parse_series_csv(text).target_index, 1u);
  EXPECT_EQ(qsel::parse_series_csv(text, {"a"}).target_index, 0u);
  EXPECT_THROW(qsel::parse_series_csv(text, {"zzz"}), qsel::SchemaError);
}

TEST(LoadCsv, Errors) {
  EXPECT_THROW(qsel::parse_series_csv(""), qsel::DataError);
  EXPECT_THROW(qsel::parse_series_csv("\n\n"), qsel::DataError);
  try {
    qsel::parse_series_csv("date,a\n2020-01-01,1\n2020-01-02,oops\n", {}, "f.csv");
    FAIL();
  } catch (const qsel::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("f.csv:3"), std::string::npos);
  }
  EXPECT_THROW(qsel::parse_series_csv("date,a\nnot-a-date,1\n"), qsel::DataError);
  EXPECT_THROW(qsel::parse_series_csv("date,a\n2020-01-02,1\n2020-01-01,2\n"), qsel::DataError);
  EXPECT_THROW(qsel::parse_series_csv("date,a\n2020-01-01,1\n2020-01-01,2\n"), qsel::DataError);
  EXPECT_THROW(qsel::parse_series_csv("date,a\n2020-01-01,1,2\n"), qsel::DataError);
  EXPECT_THROW(qsel::load_series_csv("/nonexistent/file.csv"), qsel::DataError);
}

TEST(LoadCsv, WriteReadRoundTrip) {
  std::mt19937_64 rng(1);
  SeriesFrame f;
  f.values = oracle::random_matrix(20, 3, rng, -1e3, 1e3);
  f.feature_names = {"x", "y", "OT"};
  f.target_index = 2;
  for (std::size_t i = 0; i < 20; ++i) f.timestamps.push_back(1'600'000'000 + 3600 * static_cast<qsel::Instant>(i));
  const auto path = std::filesystem::temp_directory_path() / "qsel_roundtrip.csv";
  qsel::write_series_csv(path, f);
  const SeriesFrame g = qsel::load_series_csv(path);
  std::filesystem::remove(path);
  EXPECT_EQ(g.timestamps, f.timestamps);
  EXPECT_EQ(g.feature_names, f.feature_names);
  EXPECT_LE(qsel::max_abs_diff(g.values, f.values), 1e-12);
}

TEST(Splits, ContiguousAndDisjoint) {
  const auto s = qsel::split_rows(100, {});
  EXPECT_EQ(s.train.begin, 0u);
  EXPECT_EQ(s.train.end, 60u);
  EXPECT_EQ(s.val.begin, 60u);
  EXPECT_EQ(s.val.end, 80u);
  EXPECT_EQ(s.test.begin, 80u);
  EXPECT_EQ(s.test.end, 100u);
  EXPECT_THROW(qsel::split_rows(100, {0.0, 0.5, 0.5}), qsel::DataError);
}

namespace {

SeriesFrame frame_from(const Matrix& values) {
  SeriesFrame f;
  f.values = values;
  for (std::size_t j = 0; j < values.cols(); ++j) f.feature_names.push_back("c" + std::to_string(j));
  f.target_index = values.cols() - 1;
  for (std::size_t i = 0; i < values.rows(); ++i) f.timestamps.push_back(static_cast<qsel::Instant>(i) * 60);
  return f;
}

}  // namespace

TEST(Normalize, TrainSplitIsStandardised) {
  std::mt19937_64 rng(2);
  const SeriesFrame f = frame_from(oracle::random_matrix(50, 3, rng, 3, 9));
  const qsel::RowRange train{0, 30};
  const auto state = qsel::normalize_fit(f, train);
  const SeriesFrame z = qsel::normalize_apply(f, state);
  for (std::size_t j = 0; j < 3; ++j) {
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < 30; ++i) mean += z.values(i, j) / 30.0;
    for (std::size_t i = 0; i < 30; ++i) sq += (z.values(i, j) - mean) * (z.values(i, j) - mean) / 30.0;
    EXPECT_NEAR(mean, 0.0, 1e-10);
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-10);
  }
}

TEST(Normalize, IgnoresRowsOutsideTrain) {
  std::mt19937_64 rng(3);
  SeriesFrame f = frame_from(oracle::random_matrix(40, 2, rng));
  const auto a = qsel::normalize_fit(f, {0, 20});
  for (std::size_t i = 20; i < 40; ++i) f.values(i, 0) = 1e6;
  const auto b = qsel::normalize_fit(f, {0, 20});
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.stddev, b.stddev);
}

TEST(Normalize, ShiftInvariant) {
  std::mt19937_64 rng(4);
  const Matrix m = oracle::random_matrix(30, 2, rng);
  Matrix shifted = m;
  for (double& x : shifted.values()) x += 17.0;
  const SeriesFrame f = frame_from(m), g = frame_from(shifted);
  const auto zf = qsel::normalize_apply(f, qsel::normalize_fit(f, {0, 30}));
  const auto zg = qsel::normalize_apply(g, qsel::normalize_fit(g, {0, 30}));
  EXPECT_LE(qsel::max_abs_diff(zf.values, zg.values), 1e-12);
}

TEST(Normalize, InvertRoundTrip) {
  std::mt19937_64 rng(5);
  const SeriesFrame f = frame_from(oracle::random_matrix(30, 3, rng, -5, 5));
  const auto state = qsel::normalize_fit(f, {0, 30});
  const Matrix m = oracle::random_matrix(7, 2, rng);
  const std::vector<std::size_t> cols{2, 0};
  EXPECT_LE(qsel::max_abs_diff(qsel::normalize_invert(qsel::normalize_columns(m, state, cols), state, cols), m), 1e-12);
}

TEST(Normalize, ConstantFeatureNamed) {
  Matrix m(10, 2, 1.0);
  for (std::size_t i = 0; i < 10; ++i) m(i, 0) = static_cast<double>(i);
  try {
    qsel::normalize_fit(frame_from(m), {0, 10});
    FAIL();
  } catch (const qsel::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("c1"), std::string::npos);
  }
}

TEST(Windows, CountAndAlignment) {
  Matrix m(10, 1);
  for (std::size_t i = 0; i < 10; ++i) m(i, 0) = static_cast<double>(i);
  const SeriesFrame f = frame_from(m);
  const auto plan = qsel::plan_columns(f, qsel::ForecastMode::univariate);
  const auto w = qsel::make_windows(f, {4, 2, 2, 1}, {0, 10}, plan);
  ASSERT_EQ(w.size(), 5u);
  EXPECT_DOUBLE_EQ(w[0].target(0, 0), 4.0);
  EXPECT_EQ(w[0].dec_known, (Matrix{{2}, {3}}));
  EXPECT_EQ(qsel::make_windows(f, {4, 2, 2, 3}, {0, 10}, plan).size(), 2u);
}

TEST(Windows, TailAndTargetAreContiguousSource) {
  std::mt19937_64 rng(6);
  const SeriesFrame f = frame_from(oracle::random_matrix(60, 3, rng));
  const auto plan = qsel::plan_columns(f, qsel::ForecastMode::multivariate);
  for (const auto& w : qsel::make_windows(f, {12, 5, 6, 2}, {10, 50}, plan)) {
    const Matrix joined = qsel::concat_rows(w.dec_known, w.target);
    EXPECT_EQ(joined, qsel::slice_rows(f.values, w.start + 12 - 5, 11));
  }
}

TEST(Windows, NeverCrossSplitBoundaries) {
  std::mt19937_64 rng(7);
  const SeriesFrame f = frame_from(oracle::random_matrix(200, 1, rng));
  const auto splits = qsel::split_rows(200, {});
  const auto plan = qsel::plan_columns(f, qsel::ForecastMode::univariate);
  for (const auto range : {splits.train, splits.val, splits.test}) {
    for (const auto& w : qsel::make_windows(f, {16, 8, 8, 1}, range, plan)) {
      EXPECT_GE(w.start, range.begin);
      EXPECT_LE(w.start + 16 + 8, range.end);
    }
  }
}

TEST(Windows, ShortSplitStatesMinimum) {
  const SeriesFrame f = frame_from(Matrix(10, 1, 1.0));
  const auto plan = qsel::plan_columns(f, qsel::ForecastMode::univariate);
  try {
    qsel::make_windows(f, {8, 4, 4, 1}, {0, 10}, plan);
    FAIL();
  } catch (const qsel::DataError& e) {
    EXPECT_NE(std::string(e.what()).find("12"), std::string::npos);
  }
}

TEST(Windows, SubsampleIsEvenAndBounded) {
  std::vector<qsel::WindowSample> w(100);
  for (std::size_t i = 0; i < 100; ++i) w[i].start = i;
  const auto s = qsel::subsample(w, 10);
  ASSERT_EQ(s.size(), 10u);
  EXPECT_EQ(s.front().start, 0u);
  EXPECT_GE(s.back().start, 89u);
  EXPECT_EQ(qsel::subsample(w, 0).size(), 100u);
  EXPECT_EQ(qsel::subsample(w, 500).size(), 100u);
}

TEST(ColumnPlan, Modes) {
  const SeriesFrame f = frame_from(Matrix(5, 3, 1.0));
  const auto u = qsel::plan_columns(f, qsel::ForecastMode::univariate);
  EXPECT_EQ(u.inputs, (std::vector<std::size_t>{2}));
  EXPECT_EQ(u.targets, (std::vector<std::size_t>{2}));
  const auto m = qsel::plan_columns(f, qsel::ForecastMode::multivariate);
  EXPECT_EQ(m.inputs, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(m.targets, m.inputs);
  EXPECT_EQ(qsel::parse_forecast_mode("M"), qsel::ForecastMode::multivariate);
  EXPECT_THROW(qsel::parse_forecast_mode("sideways"), qsel::ArgumentError);
}

TEST(Synthetic, PureTrend) {
  qsel::SyntheticSpec s;
  s.length = 100;
  s.seasonal_amp = 0.0;
  s.noise_std = 0.0;
  s.trend_slope = 0.25;
  const auto f = qsel::gen_synthetic(s);
  for (std::size_t t = 0; t < 100; ++t) EXPECT_DOUBLE_EQ(f.values(t, 0), 0.25 * static_cast<double>(t));
}

TEST(Synthetic, SeasonalRepeatsUpToTrend) {
  qsel::SyntheticSpec s;
  s.length = 500;
  s.noise_std = 0.0;
  s.trend_slope = 0.003;
  const auto f = qsel::gen_synthetic(s);
  for (std::size_t t = 0; t + s.period < 500; ++t) {
    EXPECT_NEAR(f.values(t + s.period, 0) - f.values(t, 0), s.trend_slope * static_cast<double>(s.period), 1e-9);
  }
}

TEST(Synthetic, ResidualVarianceMatchesNoise) {
  qsel::SyntheticSpec s;
  s.length = 10000;
  s.noise_std = 0.1;
  const auto f = qsel::gen_synthetic(s);
  double sum = 0.0, sq = 0.0;
  for (std::size_t t = 0; t < s.length; ++t) {
    const double td = static_cast<double>(t);
    const double r = f.values(t, 0) - s.trend_slope * td -
                     s.seasonal_amp * std::sin(2.0 * M_PI * td / static_cast<double>(s.period));
    sum += r;
    sq += r * r;
  }
  const double n = static_cast<double>(s.length);
  const double var = (sq - sum * sum / n) / (n - 1.0);
  EXPECT_NEAR(var, 0.01, 0.001);
}

TEST(Synthetic, ReproduciblePerSeed) {
  qsel::SyntheticSpec s;
  s.length = 300;
  EXPECT_EQ(qsel::gen_synthetic(s).values, qsel::gen_synthetic(s).values);
  auto other = s;
  other.seed = 2;
  EXPECT_NE(qsel::gen_synthetic(s).values, qsel::gen_synthetic(other).values);
}

TEST(Synthetic, InvalidPeriod) {
  qsel::SyntheticSpec s;
  s.period = 1;
  EXPECT_THROW(qsel::gen_synthetic(s), qsel::ArgumentError);
  s.period = 24;
  s.length = 30;
  EXPECT_THROW(qsel::gen_synthetic(s), qsel::ArgumentError);
}
