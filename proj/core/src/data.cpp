#include "qsel/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "qsel/errors.hpp"
#include "text_util.hpp"

namespace qsel {

using detail::format_real;
using detail::read_file;
using detail::split_fields;
using detail::trim;

SeriesFrame parse_series_csv(std::string_view text, const SeriesSchema& schema, std::string_view source) {
  const std::string where(source);
  const auto lines = detail::split_lines(text);
  std::size_t first = 0;
  while (first < lines.size() && trim(lines[first]).empty()) ++first;
  if (first == lines.size()) throw DataError(where + ": empty file");

  const auto header = split_fields(lines[first]);
  if (header.size() < 2) throw SchemaError(where + ": header needs a timestamp column and at least one value column");

  SeriesFrame frame;
  for (std::size_t j = 1; j < header.size(); ++j) frame.feature_names.emplace_back(header[j]);

  std::vector<double> data;
  for (std::size_t li = first + 1; li < lines.size(); ++li) {
    if (trim(lines[li]).empty()) continue;
    const std::string line_no = where + ":" + std::to_string(li + 1);
    const auto fields = split_fields(lines[li]);
    if (fields.size() != header.size()) {
      throw DataError(line_no + ": expected " + std::to_string(header.size()) + " fields, got " +
                      std::to_string(fields.size()));
    }
    const auto ts = parse_timestamp(fields[0]);
    if (!ts) throw DataError(line_no + ": cannot parse timestamp '" + std::string(fields[0]) + "'");
    if (!frame.timestamps.empty() && *ts <= frame.timestamps.back()) {
      throw DataError(line_no + ": timestamps must be strictly increasing");
    }
    frame.timestamps.push_back(*ts);
    for (std::size_t j = 1; j < fields.size(); ++j) {
      double v = 0.0;
      const auto f = fields[j];
      const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
      if (f.empty() || ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v)) {
        throw DataError(line_no + ": column '" + frame.feature_names[j - 1] + "' is not a number: '" +
                        std::string(f) + "'");
      }
      data.push_back(v);
    }
  }
  if (frame.timestamps.empty()) throw DataError(where + ": no data rows");
  frame.values = Matrix(frame.timestamps.size(), frame.feature_names.size(), std::move(data));

  const auto& names = frame.feature_names;
  std::string target = schema.target;
  if (target.empty()) {
    target = std::find(names.begin(), names.end(), "OT") != names.end() ? "OT" : names.back();
  }
  const auto it = std::find(names.begin(), names.end(), target);
  if (it == names.end()) throw SchemaError(where + ": target column '" + target + "' not in header");
  frame.target_index = static_cast<std::size_t>(it - names.begin());
  return frame;
}

SeriesFrame load_series_csv(const std::filesystem::path& path, const SeriesSchema& schema) {
  return parse_series_csv(read_file(path), schema, path.string());
}

std::string series_to_csv(const SeriesFrame& frame) {
  std::string out = "date";
  for (const auto& n : frame.feature_names) out += "," + n;
  out += "\n";
  for (std::size_t i = 0; i < frame.rows(); ++i) {
    out += format_timestamp(frame.timestamps[i]);
    for (double v : frame.values.row(i)) out += "," + format_real(v);
    out += "\n";
  }
  return out;
}

void write_series_csv(const std::filesystem::path& path, const SeriesFrame& frame) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << series_to_csv(frame);
}

Splits split_rows(std::size_t rows, const SplitRatios& r) {
  if (r.train <= 0.0 || r.val < 0.0 || r.test <= 0.0) {
    throw DataError("split ratios must be positive for train and test, non-negative for val");
  }
  const double total = r.train + r.val + r.test;
  const auto n_train = static_cast<std::size_t>(std::floor(static_cast<double>(rows) * r.train / total));
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(rows) * r.val / total));
  Splits s;
  s.train = {0, n_train};
  s.val = {n_train, n_train + n_val};
  s.test = {n_train + n_val, rows};
  return s;
}

NormState normalize_fit(const SeriesFrame& frame, RowRange train) {
  if (train.size() == 0 || train.end > frame.rows()) throw DataError("normalize_fit: empty or invalid training range");
  NormState st;
  const double n = static_cast<double>(train.size());
  for (std::size_t j = 0; j < frame.features(); ++j) {
    double mean = 0.0;
    for (std::size_t i = train.begin; i < train.end; ++i) mean += frame.values(i, j);
    mean /= n;
    double var = 0.0;
    for (std::size_t i = train.begin; i < train.end; ++i) {
      const double d = frame.values(i, j) - mean;
      var += d * d;
    }
    const double sd = std::sqrt(var / n);
    if (!(sd > 0.0)) throw DataError("feature '" + frame.feature_names[j] + "' has zero variance on the training split");
    st.mean.push_back(mean);
    st.stddev.push_back(sd);
  }
  return st;
}

SeriesFrame normalize_apply(const SeriesFrame& frame, const NormState& state) {
  if (state.mean.size() != frame.features()) throw DimensionError("normalize_apply: feature count mismatch");
  SeriesFrame out = frame;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.features(); ++j)
      out.values(i, j) = (frame.values(i, j) - state.mean[j]) / state.stddev[j];
  return out;
}

Matrix normalize_invert(const Matrix& m, const NormState& state, std::span<const std::size_t> columns) {
  if (columns.size() != m.cols()) throw DimensionError("normalize_invert: column map does not match " + shape_of(m));
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const std::size_t f = columns[j];
      out(i, j) = m(i, j) * state.stddev.at(f) + state.mean.at(f);
    }
  return out;
}

Matrix normalize_columns(const Matrix& m, const NormState& state, std::span<const std::size_t> columns) {
  if (columns.size() != m.cols()) throw DimensionError("normalize_columns: column map does not match " + shape_of(m));
  Matrix out = m;
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) {
      const std::size_t f = columns[j];
      out(i, j) = (m(i, j) - state.mean.at(f)) / state.stddev.at(f);
    }
  return out;
}

std::string_view to_string(ForecastMode mode) {
  return mode == ForecastMode::univariate ? "univariate" : "multivariate";
}

ForecastMode parse_forecast_mode(std::string_view text) {
  if (text == "univariate" || text == "S") return ForecastMode::univariate;
  if (text == "multivariate" || text == "M") return ForecastMode::multivariate;
  throw ArgumentError("unknown forecast mode '" + std::string(text) + "' (expected univariate or multivariate)");
}

ColumnPlan plan_columns(const SeriesFrame& frame, ForecastMode mode) {
  ColumnPlan plan;
  if (mode == ForecastMode::univariate) {
    plan.inputs = {frame.target_index};
    plan.targets = {frame.target_index};
  } else {
    for (std::size_t j = 0; j < frame.features(); ++j) plan.inputs.push_back(j);
    plan.targets = plan.inputs;
  }
  return plan;
}

std::vector<WindowSample> make_windows(const SeriesFrame& frame, const WindowSpec& spec, RowRange split,
                                       const ColumnPlan& columns) {
  if (spec.stride == 0) throw ArgumentError("make_windows: stride must be positive");
  if (spec.input_len == 0 || spec.pred_len == 0) throw ArgumentError("make_windows: input_len and pred_len must be positive");
  if (spec.label_len > spec.input_len) throw ArgumentError("make_windows: label_len exceeds input_len");
  if (split.end > frame.rows() || split.begin > split.end) throw DataError("make_windows: split outside the frame");
  const std::size_t need = spec.input_len + spec.pred_len;
  if (split.size() < need) {
    throw DataError("split of " + std::to_string(split.size()) + " rows is too short; windows need at least " +
                    std::to_string(need) + " rows (input_len + pred_len)");
  }
  std::vector<WindowSample> out;
  for (std::size_t s = split.begin; s + need <= split.end; s += spec.stride) {
    WindowSample w;
    w.start = s;
    w.enc_in = Matrix(spec.input_len, columns.inputs.size());
    for (std::size_t i = 0; i < spec.input_len; ++i)
      for (std::size_t j = 0; j < columns.inputs.size(); ++j) w.enc_in(i, j) = frame.values(s + i, columns.inputs[j]);
    if (spec.label_len > 0) w.dec_known = slice_rows(w.enc_in, spec.input_len - spec.label_len, spec.label_len);
    w.target = Matrix(spec.pred_len, columns.targets.size());
    for (std::size_t i = 0; i < spec.pred_len; ++i)
      for (std::size_t j = 0; j < columns.targets.size(); ++j)
        w.target(i, j) = frame.values(s + spec.input_len + i, columns.targets[j]);
    out.push_back(std::move(w));
  }
  return out;
}

std::vector<WindowSample> subsample(std::vector<WindowSample> windows, std::size_t max_count) {
  if (max_count == 0 || windows.size() <= max_count) return windows;
  std::vector<WindowSample> out;
  out.reserve(max_count);
  for (std::size_t k = 0; k < max_count; ++k) out.push_back(std::move(windows[k * windows.size() / max_count]));
  return out;
}

SeriesFrame gen_synthetic(const SyntheticSpec& spec) {
  if (spec.period < 2) throw ArgumentError("gen_synthetic: period must be at least 2");
  if (spec.length < 2 * spec.period) throw ArgumentError("gen_synthetic: length must be at least 2 * period");
  if (spec.noise_std < 0.0) throw ArgumentError("gen_synthetic: noise_std must be non-negative");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> noise(0.0, spec.noise_std > 0.0 ? spec.noise_std : 1.0);

  SeriesFrame frame;
  frame.feature_names = {"value"};
  frame.values = Matrix(spec.length, 1);
  const Instant origin = *parse_timestamp("2016-07-01 00:00:00");
  const double omega = 2.0 * std::numbers::pi / static_cast<double>(spec.period);
  for (std::size_t t = 0; t < spec.length; ++t) {
    const double td = static_cast<double>(t);
    double x = spec.trend_slope * td + spec.seasonal_amp * std::sin(omega * td);
    if (spec.noise_std > 0.0) x += noise(rng);
    frame.values(t, 0) = x;
    frame.timestamps.push_back(origin + static_cast<Instant>(t) * 3600);
  }
  return frame;
}

}  // namespace qsel
