#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "qsel/data.hpp"
#include "qsel/model.hpp"

namespace qsel {

/// Everything that determines one forecasting run.
///
/// Stored as flat "key = value" lines; '#' starts a comment. Keys follow the
/// hyper-parameter names (hidden_size, embedding_size, encoder_layers, ...).
struct RunConfig {
  ModelConfig model;
  std::string data_path;
  SplitRatios split;
  ForecastMode mode = ForecastMode::univariate;
  std::string target;
  std::string out_dir;
  double learning_rate = 1e-4;
  std::size_t stride = 1;
  std::size_t max_train_windows = 0;
  std::size_t max_eval_windows = 0;
  std::size_t threads = 1;
  bool raw_scale = false;
};

/// Known keys, in the order to_text writes them.
const std::vector<std::string>& run_config_keys();

/// Sets one key from its text value; throws DataError naming the key.
void set_run_config_value(RunConfig& config, std::string_view key, std::string_view value);

/// Parses the file text. Unknown keys and malformed values raise DataError.
RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::string& path);

/// Canonical text form; parse_run_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& config);

/// Model and run-level checks; DataError names the offending field.
void validate(const RunConfig& config);

}  // namespace qsel
