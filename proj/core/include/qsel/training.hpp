#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qsel/data.hpp"
#include "qsel/matrix.hpp"
#include "qsel/model.hpp"

namespace qsel {

/// Error metrics averaged over every entry (and thus over coordinates).
struct MetricReport {
  double mse = 0.0;
  double mae = 0.0;
  std::size_t n = 0;
  std::vector<double> feature_mse;
  std::vector<double> feature_mae;

  /// {"mse": ..., "mae": ..., "n": ..., "per_feature": [...]}
  std::string to_json() const;
};

MetricReport metrics(const Matrix& y, const Matrix& y_hat);

/// Running sums behind MetricReport, for metrics over many windows.
class MetricAccumulator {
 public:
  void add(const Matrix& y, const Matrix& y_hat);
  MetricReport report() const;
  std::size_t count() const noexcept { return count_; }

 private:
  std::vector<double> sq_;
  std::vector<double> abs_;
  std::size_t rows_ = 0;
  std::size_t count_ = 0;
};

struct AdamSettings {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::vector<Matrix> first_moment;
  std::vector<Matrix> second_moment;
  std::uint64_t step = 0;
  AdamSettings settings;
};

OptimizerState make_optimizer(std::span<const Matrix* const> params, const AdamSettings& settings);

/// One bias-corrected adaptive-moment update.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, OptimizerState& state);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  MetricReport val;
  bool has_val = false;
};

struct TrainOptions {
  AdamSettings adam;
  /// Worker threads per minibatch; results do not depend on this.
  std::size_t threads = 1;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0 means the initial parameters
};

/// Seeded, shuffled minibatch MSE training for config.iterations epochs.
/// Returns the parameters with the lowest validation MSE (the last epoch when
/// val is empty). Non-finite loss raises TrainingError naming epoch and batch.
TrainResult train(const ModelConfig& config, std::span<const WindowSample> train_windows,
                  std::span<const WindowSample> val_windows, const TrainOptions& options = {});

/// Prediction of the model for one encoder window.
Matrix predict(const ModelParams& params, const ModelConfig& config, const Matrix& enc_in);

struct EvalOptions {
  /// When set, predictions and targets are mapped back to raw scale first.
  const NormState* raw_scale = nullptr;
  std::vector<std::size_t> target_columns;
};

using Predictor = std::function<Matrix(const WindowSample&)>;

MetricReport evaluate_predictor(std::span<const WindowSample> windows, const Predictor& predictor,
                                const EvalOptions& options = {});

/// Throws DataError on an empty split.
MetricReport evaluate(const ModelParams& params, const ModelConfig& config,
                      std::span<const WindowSample> windows, const EvalOptions& options = {});

/// Repeats the last observed value of each target for the whole horizon.
/// target_positions[j] is the enc_in column holding target j.
Matrix persistence_forecast(const WindowSample& window, std::span<const std::size_t> target_positions,
                            std::size_t pred_len);

struct SweepSetup {
  ModelConfig base;
  SeriesFrame frame;  // already normalised
  Splits splits;
  ColumnPlan columns;
  std::size_t stride = 1;
  std::size_t max_train_windows = 0;
  std::size_t max_eval_windows = 0;
  TrainOptions options;
};

struct SweepCell {
  double factor = 0.0;
  std::size_t input_len = 0;
  bool skipped = false;
  std::string note;
  MetricReport report;
  double runtime_s = 0.0;
};

/// Config used for one sweep cell: base with factor and input_len replaced
/// and label_len clipped to input_len.
ModelConfig sweep_cell_config(const ModelConfig& base, double factor, std::size_t input_len);

/// Trains on the train split and scores the test split for one config.
MetricReport train_and_evaluate(const SweepSetup& setup, const ModelConfig& config);

/// One cell per (factor, input_len) in row-major order. Inadmissible cells are
/// marked skipped with a note and the sweep continues.
std::vector<SweepCell> sweep_factor(const SweepSetup& setup, std::span<const double> factors,
                                    std::span<const std::size_t> input_lengths);

/// factor,input_len,mse,mae[,runtime_s]; skipped cells carry "skipped" values.
/// Without the runtime column the file is bitwise reproducible.
std::string sweep_csv(std::span<const SweepCell> cells, bool include_runtime = true);

/// epoch,train_loss,val_mse,val_mae
std::string history_csv(std::span<const EpochRecord> history);

}  // namespace qsel
