#include "qsel/training.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <thread>

#include <json.hpp>

#include "qsel/errors.hpp"
#include "parallel.hpp"
#include "text_util.hpp"

namespace qsel {

namespace {

using detail::format_real;
using detail::mix;
using detail::parallel_for;

struct SampleResult {
  double loss = 0.0;
  std::vector<Matrix> grads;
};

SampleResult sample_gradient(const ModelParams& params, const ModelConfig& config, const WindowSample& w,
                             std::uint64_t seed) {
  ad::Tape tape(seed);
  const auto vars = bind(tape, params.weights, true);
  ForwardOptions opts;
  opts.train_mode = true;
  const Matrix dec_in = make_decoder_input(w.enc_in, config.label_len, config.pred_len);
  ad::Var loss = ad::mse_loss(forward(vars, params.positional, config, w.enc_in, dec_in, opts), w.target);
  tape.backward(loss);
  SampleResult r;
  r.loss = loss.value()(0, 0);
  for_each_tensor(vars, [&](const std::string&, const ad::Var& v) { r.grads.push_back(v.grad()); });
  return r;
}

}  // namespace

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["mse"] = mse;
  j["mae"] = mae;
  j["n"] = n;
  auto per = nlohmann::ordered_json::array();
  for (std::size_t f = 0; f < feature_mse.size(); ++f) {
    per.push_back({{"mse", feature_mse[f]}, {"mae", feature_mae[f]}});
  }
  j["per_feature"] = per;
  return j.dump(2);
}

void MetricAccumulator::add(const Matrix& y, const Matrix& y_hat) {
  if (!y.same_shape(y_hat)) {
    throw DimensionError("metrics: target " + shape_of(y) + " vs prediction " + shape_of(y_hat));
  }
  if (sq_.empty()) {
    sq_.assign(y.cols(), 0.0);
    abs_.assign(y.cols(), 0.0);
  } else if (sq_.size() != y.cols()) {
    throw DimensionError("metrics: column count changed between batches");
  }
  for (std::size_t i = 0; i < y.rows(); ++i)
    for (std::size_t j = 0; j < y.cols(); ++j) {
      const double d = y(i, j) - y_hat(i, j);
      sq_[j] += d * d;
      abs_[j] += std::abs(d);
    }
  rows_ += y.rows();
  ++count_;
}

MetricReport MetricAccumulator::report() const {
  MetricReport r;
  if (rows_ == 0) return r;
  double sq = 0.0, ab = 0.0;
  for (std::size_t j = 0; j < sq_.size(); ++j) {
    r.feature_mse.push_back(sq_[j] / static_cast<double>(rows_));
    r.feature_mae.push_back(abs_[j] / static_cast<double>(rows_));
    sq += sq_[j];
    ab += abs_[j];
  }
  r.n = rows_ * sq_.size();
  r.mse = sq / static_cast<double>(r.n);
  r.mae = ab / static_cast<double>(r.n);
  return r;
}

MetricReport metrics(const Matrix& y, const Matrix& y_hat) {
  MetricAccumulator acc;
  acc.add(y, y_hat);
  return acc.report();
}

OptimizerState make_optimizer(std::span<const Matrix* const> params, const AdamSettings& settings) {
  OptimizerState s;
  s.settings = settings;
  for (const Matrix* p : params) {
    s.first_moment.emplace_back(p->rows(), p->cols());
    s.second_moment.emplace_back(p->rows(), p->cols());
  }
  return s;
}

void adam_step(std::span<Matrix* const> params, std::span<const Matrix> grads, OptimizerState& state) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size()) {
    throw DimensionError("adam_step: parameter, gradient and moment counts differ");
  }
  const AdamSettings& a = state.settings;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(a.beta1, t);
  const double c2 = 1.0 - std::pow(a.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& p = *params[k];
    const Matrix& g = grads[k];
    if (!p.same_shape(g) || !p.same_shape(state.first_moment[k])) {
      throw DimensionError("adam_step: tensor " + std::to_string(k) + " shape mismatch");
    }
    auto pv = p.values();
    auto gv = g.values();
    auto m = state.first_moment[k].values();
    auto v = state.second_moment[k].values();
    for (std::size_t i = 0; i < pv.size(); ++i) {
      m[i] = a.beta1 * m[i] + (1.0 - a.beta1) * gv[i];
      v[i] = a.beta2 * v[i] + (1.0 - a.beta2) * gv[i] * gv[i];
      pv[i] -= a.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + a.epsilon);
    }
  }
}

Matrix predict(const ModelParams& params, const ModelConfig& config, const Matrix& enc_in) {
  return forward(params, config, enc_in, make_decoder_input(enc_in, config.label_len, config.pred_len));
}

TrainResult train(const ModelConfig& config, std::span<const WindowSample> train_windows,
                  std::span<const WindowSample> val_windows, const TrainOptions& options) {
  validate(config);
  TrainResult result;
  result.params = init_params(config, config.seed);
  if (config.iterations == 0) return result;
  if (train_windows.empty()) throw DataError("train: the training split has no windows");

  ModelParams current = result.params;
  auto param_ptrs = tensors(current.weights);
  std::vector<const Matrix*> const_ptrs(param_ptrs.begin(), param_ptrs.end());
  OptimizerState opt = make_optimizer(const_ptrs, options.adam);

  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 shuffle_rng(mix(config.seed));
  double best_val = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 1; epoch <= config.iterations; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
      const std::size_t count = std::min(config.batch_size, order.size() - begin);
      std::vector<SampleResult> results(count);
      parallel_for(count, options.threads, [&](std::size_t i) {
        const std::uint64_t seed = mix(config.seed ^ mix(epoch * 1000003ULL + begin + i));
        results[i] = sample_gradient(current, config, train_windows[order[begin + i]], seed);
      });

      double batch_loss = 0.0;
      std::vector<Matrix> grads = std::move(results.front().grads);
      batch_loss += results.front().loss;
      for (std::size_t i = 1; i < count; ++i) {
        batch_loss += results[i].loss;
        for (std::size_t k = 0; k < grads.size(); ++k) add_in_place(grads[k], results[i].grads[k]);
      }
      if (!std::isfinite(batch_loss)) {
        throw TrainingError("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
      }
      const double inv = 1.0 / static_cast<double>(count);
      for (Matrix& g : grads)
        for (double& x : g.values()) x *= inv;
      adam_step(param_ptrs, grads, opt);
      loss_total += batch_loss;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_total / static_cast<double>(order.size());
    if (!val_windows.empty()) {
      rec.val = evaluate(current, config, val_windows);
      rec.has_val = true;
    }
    const double score = rec.has_val ? rec.val.mse : -static_cast<double>(epoch);
    if (score < best_val) {
      best_val = score;
      result.params = current;
      result.best_epoch = epoch;
    }
    if (options.on_epoch) options.on_epoch(rec);
    result.history.push_back(std::move(rec));
  }
  return result;
}

MetricReport evaluate_predictor(std::span<const WindowSample> windows, const Predictor& predictor,
                                const EvalOptions& options) {
  if (windows.empty()) throw DataError("evaluate: the split has no windows");
  MetricAccumulator acc;
  for (const WindowSample& w : windows) {
    Matrix pred = predictor(w);
    if (options.raw_scale != nullptr) {
      acc.add(normalize_invert(w.target, *options.raw_scale, options.target_columns),
              normalize_invert(pred, *options.raw_scale, options.target_columns));
    } else {
      acc.add(w.target, pred);
    }
  }
  return acc.report();
}

MetricReport evaluate(const ModelParams& params, const ModelConfig& config, std::span<const WindowSample> windows,
                      const EvalOptions& options) {
  return evaluate_predictor(
      windows, [&](const WindowSample& w) { return predict(params, config, w.enc_in); }, options);
}

Matrix persistence_forecast(const WindowSample& window, std::span<const std::size_t> target_positions,
                            std::size_t pred_len) {
  Matrix out(pred_len, target_positions.size());
  const std::size_t last = window.enc_in.rows() - 1;
  for (std::size_t i = 0; i < pred_len; ++i)
    for (std::size_t j = 0; j < target_positions.size(); ++j) out(i, j) = window.enc_in(last, target_positions[j]);
  return out;
}

ModelConfig sweep_cell_config(const ModelConfig& base, double factor, std::size_t input_len) {
  ModelConfig c = base;
  c.factor_f = factor;
  c.input_len = input_len;
  c.label_len = std::min(base.label_len, input_len);
  return c;
}

MetricReport train_and_evaluate(const SweepSetup& setup, const ModelConfig& config) {
  const WindowSpec spec{config.input_len, config.label_len, config.pred_len, setup.stride};
  const auto train_w = subsample(make_windows(setup.frame, spec, setup.splits.train, setup.columns),
                                 setup.max_train_windows);
  std::vector<WindowSample> val_w;
  if (setup.splits.val.size() >= config.input_len + config.pred_len) {
    val_w = subsample(make_windows(setup.frame, spec, setup.splits.val, setup.columns), setup.max_eval_windows);
  }
  const auto test_w = subsample(make_windows(setup.frame, spec, setup.splits.test, setup.columns),
                                setup.max_eval_windows);
  const TrainResult trained = train(config, train_w, val_w, setup.options);
  return evaluate(trained.params, config, test_w);
}

std::vector<SweepCell> sweep_factor(const SweepSetup& setup, std::span<const double> factors,
                                    std::span<const std::size_t> input_lengths) {
  std::vector<SweepCell> cells;
  for (double f : factors) {
    for (std::size_t len : input_lengths) {
      SweepCell cell;
      cell.factor = f;
      cell.input_len = len;
      const ModelConfig config = sweep_cell_config(setup.base, f, len);
      try {
        validate(config);
        const std::size_t need = len + config.pred_len;
        if (setup.splits.train.size() < need || setup.splits.test.size() < need) {
          throw DataError("splits too short for input_len " + std::to_string(len) + " (need " +
                          std::to_string(need) + " rows)");
        }
      } catch (const Error& e) {
        cell.skipped = true;
        cell.note = e.what();
        cells.push_back(std::move(cell));
        continue;
      }
      const auto t0 = std::chrono::steady_clock::now();
      cell.report = train_and_evaluate(setup, config);
      cell.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::string sweep_csv(std::span<const SweepCell> cells, bool include_runtime) {
  std::string out = include_runtime ? "factor,input_len,mse,mae,runtime_s\n" : "factor,input_len,mse,mae\n";
  for (const SweepCell& c : cells) {
    out += format_real(c.factor) + "," + std::to_string(c.input_len) + ",";
    if (c.skipped) {
      out += include_runtime ? "skipped,skipped,skipped\n" : "skipped,skipped\n";
    } else {
      out += format_real(c.report.mse) + "," + format_real(c.report.mae);
      if (include_runtime) out += "," + format_real(c.runtime_s);
      out += "\n";
    }
  }
  return out;
}

std::string history_csv(std::span<const EpochRecord> history) {
  std::string out = "epoch,train_loss,val_mse,val_mae\n";
  for (const EpochRecord& r : history) {
    out += std::to_string(r.epoch) + "," + format_real(r.train_loss) + ",";
    out += r.has_val ? format_real(r.val.mse) + "," + format_real(r.val.mae) : std::string(",");
    out += "\n";
  }
  return out;
}

}  // namespace qsel
