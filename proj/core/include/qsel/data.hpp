#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qsel/matrix.hpp"
#include "qsel/timestamp.hpp"

namespace qsel {

/// Timestamped multivariate series. Timestamps are strictly increasing and
/// one per row of values.
struct SeriesFrame {
  std::vector<Instant> timestamps;
  Matrix values;
  std::vector<std::string> feature_names;
  std::size_t target_index = 0;

  std::size_t rows() const noexcept { return timestamps.size(); }
  std::size_t features() const noexcept { return feature_names.size(); }
};

struct SeriesSchema {
  /// Target column name. Empty selects "OT" when present, else the last column.
  std::string target;
};

/// CSV with a header row; first column a timestamp, the rest decimal reals.
SeriesFrame load_series_csv(const std::filesystem::path& path, const SeriesSchema& schema = {});
SeriesFrame parse_series_csv(std::string_view text, const SeriesSchema& schema = {},
                             std::string_view source = "<memory>");

std::string series_to_csv(const SeriesFrame& frame);
void write_series_csv(const std::filesystem::path& path, const SeriesFrame& frame);

/// Half-open row interval [begin, end).
struct RowRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const noexcept { return end - begin; }
};

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct Splits {
  RowRange train, val, test;
};

/// Contiguous, disjoint train/val/test ranges in row order.
Splits split_rows(std::size_t rows, const SplitRatios& ratios);

/// Per-feature z-score statistics (population standard deviation).
struct NormState {
  std::vector<double> mean;
  std::vector<double> stddev;
};

/// Fits on rows of train only. Zero-variance features raise DataError.
NormState normalize_fit(const SeriesFrame& frame, RowRange train);
SeriesFrame normalize_apply(const SeriesFrame& frame, const NormState& state);
/// Undoes the transform for a matrix whose column j holds feature columns[j].
Matrix normalize_invert(const Matrix& m, const NormState& state, std::span<const std::size_t> columns);
/// Forward transform of a matrix laid out like normalize_invert's input.
Matrix normalize_columns(const Matrix& m, const NormState& state, std::span<const std::size_t> columns);

enum class ForecastMode { univariate, multivariate };

std::string_view to_string(ForecastMode mode);
ForecastMode parse_forecast_mode(std::string_view text);

/// Feature columns fed to the model and columns it forecasts.
struct ColumnPlan {
  std::vector<std::size_t> inputs;
  std::vector<std::size_t> targets;
};

/// Univariate: target column only. Multivariate: every column in and out.
ColumnPlan plan_columns(const SeriesFrame& frame, ForecastMode mode);

struct WindowSpec {
  std::size_t input_len = 96;
  std::size_t label_len = 48;
  std::size_t pred_len = 24;
  std::size_t stride = 1;
};

struct WindowSample {
  std::size_t start = 0;  // first row of enc_in in the frame
  Matrix enc_in;          // input_len x inputs
  Matrix dec_known;       // trailing label_len rows of enc_in (empty when label_len = 0)
  Matrix target;          // pred_len x targets, the rows right after enc_in
};

/// Sliding windows lying entirely inside split. Throws DataError when the
/// split is shorter than input_len + pred_len.
std::vector<WindowSample> make_windows(const SeriesFrame& frame, const WindowSpec& spec,
                                       RowRange split, const ColumnPlan& columns);

/// At most max_count windows, evenly spaced over the input (0 keeps all).
std::vector<WindowSample> subsample(std::vector<WindowSample> windows, std::size_t max_count);

struct SyntheticSpec {
  std::size_t length = 4000;
  double trend_slope = 1e-4;
  std::size_t period = 24;
  double seasonal_amp = 1.0;
  double noise_std = 0.1;
  std::uint64_t seed = 1;
};

/// x_t = slope * t + amp * sin(2 pi t / period) + N(0, noise_std^2), hourly timestamps.
SeriesFrame gen_synthetic(const SyntheticSpec& spec);

}  // namespace qsel
