#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qsel/bench.hpp"
#include "qsel/checkpoint.hpp"
#include "qsel/data.hpp"
#include "qsel/errors.hpp"
#include "qsel/eventlog.hpp"
#include "qsel/run_config.hpp"
#include "qsel/training.hpp"

namespace qsel::cli {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

// Config keys that may also be given as --flags (underscores become dashes).
const std::vector<std::string> kModelKeys = {
    "hidden_size", "embedding_size", "encoder_layers", "decoder_layers", "heads", "batch_size", "dropout",
    "iterations", "factor", "input_len", "label_len", "pred_len", "encoder_attention", "decoder_self_attention",
    "decoder_cross_attention", "seed", "allow_out_of_range", "learning_rate"};
const std::vector<std::string> kRunKeys = {"data", "split", "mode", "target", "stride", "max_train_windows",
                                           "max_eval_windows", "threads", "metric_scale"};

std::string flag_of(const std::string& key) {
  std::string f = key;
  std::replace(f.begin(), f.end(), '_', '-');
  return "--" + f;
}

const std::map<std::string, std::string>& key_help() {
  static const std::map<std::string, std::string> help = {
      {"hidden_size", "Model width (hidden size)"},
      {"embedding_size", "Input embedding width; even"},
      {"encoder_layers", "Number of encoder layers"},
      {"decoder_layers", "Number of decoder layers"},
      {"heads", "Attention heads; must divide the hidden size"},
      {"batch_size", "Minibatch size"},
      {"dropout", "Dropout rate in [0, 1)"},
      {"iterations", "Training epochs"},
      {"factor", "Query selector factor f; f = 0 selects every query"},
      {"input_len", "Encoder window length"},
      {"label_len", "Known decoder rows taken from the end of the window"},
      {"pred_len", "Forecast horizon"},
      {"encoder_attention", "full or query_selector"},
      {"decoder_self_attention", "full or query_selector"},
      {"decoder_cross_attention", "full or query_selector"},
      {"seed", "Seed for initialisation, shuffling and dropout"},
      {"allow_out_of_range", "Accept hyper-parameters outside the searched ranges (true/false)"},
      {"learning_rate", "Adam learning rate"},
      {"data", "Series CSV (timestamp column first)"},
      {"split", "train,val,test ratios"},
      {"mode", "univariate or multivariate"},
      {"target", "Target column (default OT, else the last column)"},
      {"stride", "Step between consecutive windows"},
      {"max_train_windows", "Cap on training windows, evenly spaced (0 keeps all)"},
      {"max_eval_windows", "Cap on validation/test windows (0 keeps all)"},
      {"threads", "Worker threads per minibatch; results do not depend on it"},
      {"metric_scale", "normalized or raw"},
  };
  return help;
}

// Flags layered over a config file. Each given flag replaces the file value
// and, when a file was loaded, a notice goes to the error stream.
struct Overrides {
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, CLI::Option*> options;

  void attach(CLI::App* app, const std::vector<std::string>& keys) {
    for (const std::string& k : keys) {
      options[k] = app->add_option(flag_of(k), values[k], key_help().at(k));
    }
  }

  RunConfig resolve(std::ostream& err, RunConfig base = {}) const {
    RunConfig c = config_path.empty() ? base : load_run_config(config_path);
    for (const auto& [key, opt] : options) {
      if (opt->count() == 0) continue;
      if (!config_path.empty()) {
        err << "notice: " << flag_of(key) << " overrides the config value of " << key << "\n";
      }
      set_run_config_value(c, key, values.at(key));
    }
    return c;
  }
};

std::string default_out_dir(const RunConfig& c) {
  if (!c.out_dir.empty()) return c.out_dir;
  if (const char* env = std::getenv("QSEL_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return "runs/latest";
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write '" + path.string() + "'");
  f << text;
}

json report_json(const MetricReport& r) { return json::parse(r.to_json()); }

// Loaded, split and normalised data plus the model config adapted to it.
struct Prepared {
  SeriesFrame raw;
  SeriesFrame frame;
  NormState norm;
  Splits splits;
  ColumnPlan columns;
  ModelConfig model;
  WindowSpec spec;
};

Prepared prepare(const RunConfig& c) {
  if (c.data_path.empty()) throw DataError("no data file given (--data)");
  Prepared p;
  p.raw = load_series_csv(c.data_path, SeriesSchema{c.target});
  p.splits = split_rows(p.raw.rows(), c.split);
  p.norm = normalize_fit(p.raw, p.splits.train);
  p.frame = normalize_apply(p.raw, p.norm);
  p.columns = plan_columns(p.frame, c.mode);
  p.model = c.model;
  p.model.in_features = p.columns.inputs.size();
  p.model.out_features = p.columns.targets.size();
  validate(p.model);
  p.spec = WindowSpec{p.model.input_len, p.model.label_len, p.model.pred_len, c.stride};
  return p;
}

std::vector<WindowSample> windows_for(const Prepared& p, RowRange range, std::size_t cap) {
  return subsample(make_windows(p.frame, p.spec, range, p.columns), cap);
}

std::vector<std::size_t> target_positions(const ColumnPlan& plan) {
  std::vector<std::size_t> pos;
  for (std::size_t t : plan.targets) {
    const auto it = std::find(plan.inputs.begin(), plan.inputs.end(), t);
    pos.push_back(static_cast<std::size_t>(it - plan.inputs.begin()));
  }
  return pos;
}

RowRange split_by_name(const Splits& s, const std::string& name) {
  if (name == "train") return s.train;
  if (name == "val") return s.val;
  if (name == "test") return s.test;
  throw DataError("unknown split '" + name + "' (expected train, val or test)");
}

// The echo stored in checkpoints leaves out the output location so that
// identical runs written to different directories stay byte-identical.
std::string config_echo(RunConfig c) {
  c.out_dir.clear();
  return to_text(c);
}

ModelParams restore_model(const CheckpointFile& file, const ModelConfig& model) {
  ModelParams params = init_params(model, model.seed);
  restore(params.weights, file);
  return params;
}

int cmd_train(const Overrides& ov, const std::string& out_flag, std::ostream& out, std::ostream& err) {
  RunConfig c = ov.resolve(err);
  if (!out_flag.empty()) c.out_dir = out_flag;
  c.out_dir = default_out_dir(c);
  validate(c);
  const Prepared p = prepare(c);

  const auto train_w = windows_for(p, p.splits.train, c.max_train_windows);
  std::vector<WindowSample> val_w;
  if (p.splits.val.size() >= p.spec.input_len + p.spec.pred_len) {
    val_w = windows_for(p, p.splits.val, c.max_eval_windows);
  } else {
    err << "notice: validation split too short for one window; keeping the last epoch\n";
  }
  const auto test_w = windows_for(p, p.splits.test, c.max_eval_windows);

  TrainOptions opts;
  opts.adam.learning_rate = c.learning_rate;
  opts.threads = c.threads;
  opts.on_epoch = [&](const EpochRecord& r) {
    err << "epoch " << r.epoch << " train_loss " << r.train_loss;
    if (r.has_val) err << " val_mse " << r.val.mse;
    err << "\n";
  };
  const TrainResult result = train(p.model, train_w, val_w, opts);

  EvalOptions eo;
  if (c.raw_scale) {
    eo.raw_scale = &p.norm;
    eo.target_columns = p.columns.targets;
  }
  const MetricReport test = evaluate(result.params, p.model, test_w, eo);
  const auto positions = target_positions(p.columns);
  const MetricReport baseline = evaluate_predictor(
      test_w, [&](const WindowSample& w) { return persistence_forecast(w, positions, p.model.pred_len); }, eo);

  const fs::path dir(c.out_dir);
  fs::create_directories(dir);
  write_checkpoint(dir / "best", to_checkpoint(result.params.weights, config_echo(c)));
  write_text(dir / "history.csv", history_csv(result.history));
  json m;
  m["best_epoch"] = result.best_epoch;
  m["metric_scale"] = c.raw_scale ? "raw" : "normalized";
  m["test"] = report_json(test);
  m["persistence_test"] = report_json(baseline);
  write_text(dir / "metrics.json", m.dump(2) + "\n");

  out << "mse " << test.mse << "\nmae " << test.mae << "\n";
  err << "wrote " << (dir / "best").string() << "\n";
  return 0;
}

int cmd_eval(const Overrides& ov, const std::string& checkpoint, const std::string& split, std::ostream& out,
             std::ostream& err) {
  const CheckpointFile file = read_checkpoint(checkpoint);
  RunConfig c = ov.resolve(err, parse_run_config(file.config_echo));
  validate(c);
  const Prepared p = prepare(c);
  const ModelParams params = restore_model(file, p.model);
  const auto w = windows_for(p, split_by_name(p.splits, split), c.max_eval_windows);
  EvalOptions eo;
  if (c.raw_scale) {
    eo.raw_scale = &p.norm;
    eo.target_columns = p.columns.targets;
  }
  const MetricReport r = evaluate(params, p.model, w, eo);
  json j;
  j["split"] = split;
  j["metric_scale"] = c.raw_scale ? "raw" : "normalized";
  j["mse"] = r.mse;
  j["mae"] = r.mae;
  j["n"] = r.n;
  out << j.dump(2) << "\n";
  return 0;
}

int cmd_forecast(const Overrides& ov, const std::string& checkpoint, const std::string& output, std::ostream& out,
                 std::ostream& err) {
  const CheckpointFile file = read_checkpoint(checkpoint);
  RunConfig c = ov.resolve(err, parse_run_config(file.config_echo));
  validate(c);
  const Prepared p = prepare(c);
  const ModelParams params = restore_model(file, p.model);
  const std::size_t rows = p.frame.rows();
  if (rows < p.model.input_len + 1) throw DataError("series is shorter than input_len");

  Matrix enc(p.model.input_len, p.columns.inputs.size());
  for (std::size_t i = 0; i < p.model.input_len; ++i)
    for (std::size_t j = 0; j < p.columns.inputs.size(); ++j) {
      enc(i, j) = p.frame.values(rows - p.model.input_len + i, p.columns.inputs[j]);
    }
  const Matrix pred = normalize_invert(predict(params, p.model, enc), p.norm, p.columns.targets);

  const Instant last = p.raw.timestamps.back();
  const Instant step = last - p.raw.timestamps[rows - 2];
  SeriesFrame f;
  f.values = pred;
  for (std::size_t i = 0; i < pred.rows(); ++i) f.timestamps.push_back(last + step * static_cast<Instant>(i + 1));
  for (std::size_t t : p.columns.targets) f.feature_names.push_back(p.raw.feature_names[t]);
  const std::string csv = series_to_csv(f);
  if (output.empty()) {
    out << csv;
  } else {
    write_text(output, csv);
  }
  return 0;
}

int cmd_gen_synthetic(const SyntheticSpec& spec, const std::string& output, std::ostream& out) {
  const std::string csv = series_to_csv(gen_synthetic(spec));
  if (output.empty()) {
    out << csv;
  } else {
    write_text(output, csv);
  }
  return 0;
}

struct SweepArgs {
  std::vector<double> factors = {0.5, 0.6, 0.7, 0.8, 0.9};
  std::vector<std::size_t> lengths = {240, 360, 480, 600, 720, 840};
  std::string output;
  bool no_timing = false;
  std::size_t synthetic_length = 6000;
};

int cmd_sweep(const Overrides& ov, const SweepArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig c = ov.resolve(err);
  validate(c);
  SweepSetup s;
  SeriesFrame raw;
  if (c.data_path.empty()) {
    SyntheticSpec spec;
    spec.length = a.synthetic_length;
    spec.seed = c.model.seed;
    raw = gen_synthetic(spec);
    err << "notice: no --data given; sweeping a synthetic series of " << a.synthetic_length << " rows\n";
  } else {
    raw = load_series_csv(c.data_path, SeriesSchema{c.target});
  }
  s.splits = split_rows(raw.rows(), c.split);
  s.frame = normalize_apply(raw, normalize_fit(raw, s.splits.train));
  s.columns = plan_columns(s.frame, c.mode);
  s.base = c.model;
  s.base.in_features = s.columns.inputs.size();
  s.base.out_features = s.columns.targets.size();
  s.stride = c.stride;
  s.max_train_windows = c.max_train_windows;
  s.max_eval_windows = c.max_eval_windows;
  s.options.adam.learning_rate = c.learning_rate;
  s.options.threads = c.threads;

  const auto cells = sweep_factor(s, a.factors, a.lengths);
  for (const SweepCell& cell : cells) {
    err << "factor " << cell.factor << " input_len " << cell.input_len;
    if (cell.skipped) {
      err << " skipped: " << cell.note << "\n";
    } else {
      err << " mse " << cell.report.mse << " (" << cell.runtime_s << " s)\n";
    }
  }
  const std::string csv = sweep_csv(cells, !a.no_timing);
  if (a.output.empty()) {
    out << csv;
  } else {
    write_text(a.output, csv);
  }
  return 0;
}

struct BenchArgs {
  std::vector<std::size_t> lengths = {720};
  std::vector<double> factors = {0.9};
  std::size_t dim = 64;
  BenchSettings settings;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  std::vector<KernelTiming> rows;
  for (std::size_t len : a.lengths)
    for (double f : a.factors) rows.push_back(time_kernels(len, a.dim, f, a.settings));
  out << timings_csv(rows);
  return 0;
}

struct NextActivityArgs {
  std::string data;
  ColumnMap columns;
  std::size_t synthetic_traces = 200;
  std::size_t min_prefix = 1;
  std::size_t max_prefix = 8;
  double train_ratio = 0.8;
};

int cmd_next_activity(const Overrides& ov, const NextActivityArgs& a, std::ostream& out, std::ostream& err) {
  RunConfig c = ov.resolve(err);
  EventLog log;
  if (a.data.empty()) {
    ProcessSpec spec;
    spec.traces = a.synthetic_traces;
    spec.seed = c.model.seed;
    log = gen_process_log(spec);
    err << "notice: no --data given; using a synthetic A->B->C process log of " << spec.traces << " traces\n";
  } else {
    log = load_event_log(a.data, a.columns);
  }
  check_invariants(log);
  auto [train_log, test_log] = split_traces(log, a.train_ratio);
  const DeltaScale scale = fit_delta_scale(train_log);
  const PrefixDataset train_set = build_prefix_dataset(train_log, a.min_prefix, scale);
  const PrefixDataset test_set = build_prefix_dataset(test_log, a.min_prefix, scale);
  const ModelConfig model = classifier_config(c.model, train_set.width, a.max_prefix);
  validate(model);

  AdamSettings adam;
  adam.learning_rate = c.learning_rate;
  const ClassifierResult r = train_classifier(model, train_set.classes, train_set.samples, adam, c.threads);
  for (std::size_t e = 0; e < r.epoch_loss.size(); ++e) err << "epoch " << e + 1 << " loss " << r.epoch_loss[e] << "\n";

  json j;
  j["traces"] = log.traces.size();
  j["events"] = log.events();
  j["classes"] = train_set.classes;
  j["train_samples"] = train_set.samples.size();
  j["test_samples"] = test_set.samples.size();
  j["skipped_traces"] = train_set.skipped_traces + test_set.skipped_traces;
  j["train_accuracy"] = classifier_accuracy(r.params, model, train_set.samples);
  j["test_accuracy"] = classifier_accuracy(r.params, model, test_set.samples);
  out << j.dump(2) << "\n";
  return 0;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sparse-attention time-series forecasting"};
  app.require_subcommand(1);

  std::vector<std::string> all_keys = kModelKeys;
  all_keys.insert(all_keys.end(), kRunKeys.begin(), kRunKeys.end());

  // train
  Overrides train_ov;
  std::string train_out;
  auto* train = app.add_subcommand("train", "Train a forecaster and write <out>/best, history.csv, metrics.json");
  train->add_option("--config", train_ov.config_path, "Run config file (key = value lines)")->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Output directory (default: config out_dir, $QSEL_OUT_DIR, runs/latest)");
  train_ov.attach(train, all_keys);

  // eval
  Overrides eval_ov;
  std::string eval_ckpt, eval_split = "test";
  auto* eval = app.add_subcommand("eval", "Score a checkpoint on a data split; prints mse/mae as JSON");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint written by train")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", eval_split, "train, val or test")->check(CLI::IsMember({"train", "val", "test"}));
  eval_ov.attach(eval, {"data", "target", "max_eval_windows", "metric_scale"});

  // forecast
  Overrides fc_ov;
  std::string fc_ckpt, fc_output;
  auto* forecast = app.add_subcommand("forecast", "Forecast pred_len rows past the end of the series as CSV");
  forecast->add_option("--checkpoint", fc_ckpt, "Checkpoint written by train")->required()->check(CLI::ExistingFile);
  forecast->add_option("--output", fc_output, "Write the CSV here instead of standard output");
  fc_ov.attach(forecast, {"data", "target"});

  // gen-synthetic
  SyntheticSpec syn;
  std::string syn_output;
  auto* gen = app.add_subcommand("gen-synthetic", "Write a trend + seasonal + noise series as CSV");
  gen->add_option("--length", syn.length, "Number of hourly rows")->capture_default_str();
  gen->add_option("--slope", syn.trend_slope, "Linear trend per step")->capture_default_str();
  gen->add_option("--period", syn.period, "Seasonal period in steps")->capture_default_str();
  gen->add_option("--amplitude", syn.seasonal_amp, "Seasonal amplitude")->capture_default_str();
  gen->add_option("--noise", syn.noise_std, "Gaussian noise standard deviation")->capture_default_str();
  gen->add_option("--seed", syn.seed, "Noise seed")->capture_default_str();
  gen->add_option("--output", syn_output, "Write the CSV here instead of standard output");

  // sweep
  Overrides sweep_ov;
  SweepArgs sweep_args;
  auto* sweep = app.add_subcommand("sweep", "Train and score every (factor, input_len) cell; emits a CSV grid");
  sweep->add_option("--config", sweep_ov.config_path, "Run config file")->check(CLI::ExistingFile);
  sweep->add_option("--factors", sweep_args.factors, "Comma-separated factors")->delimiter(',')->capture_default_str();
  sweep->add_option("--lengths", sweep_args.lengths, "Comma-separated input lengths")
      ->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--synthetic-length", sweep_args.synthetic_length, "Rows of the synthetic series used without --data")
      ->capture_default_str();
  sweep->add_option("--output", sweep_args.output, "Write the CSV here instead of standard output");
  sweep->add_flag("--no-timing", sweep_args.no_timing, "Leave out the runtime_s column so the file is reproducible");
  sweep_ov.attach(sweep, all_keys);

  // bench
  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "Time full attention against the query-selector kernel");
  bench->add_option("--len", bench_args.lengths, "Comma-separated sequence lengths")->delimiter(',')->capture_default_str();
  bench->add_option("--factor", bench_args.factors, "Comma-separated factors")->delimiter(',')->capture_default_str();
  bench->add_option("--dim", bench_args.dim, "Query/key/value width")->capture_default_str();
  bench->add_option("--reps", bench_args.settings.reps, "Timed repetitions; the median is reported")->capture_default_str();
  bench->add_option("--warmup", bench_args.settings.warmup, "Untimed warmup runs")->capture_default_str();
  bench->add_option("--seed", bench_args.settings.seed, "Input seed")->capture_default_str();

  // next-activity
  Overrides na_ov;
  NextActivityArgs na;
  auto* next = app.add_subcommand("next-activity", "Train and score a next-activity classifier on an event log");
  next->add_option("--config", na_ov.config_path, "Run config file (model keys only are used)")->check(CLI::ExistingFile);
  next->add_option("--data", na.data, "Event log CSV; without it a synthetic process log is used");
  next->add_option("--case-column", na.columns.case_id, "Case id column")->capture_default_str();
  next->add_option("--activity-column", na.columns.activity, "Activity column")->capture_default_str();
  next->add_option("--timestamp-column", na.columns.timestamp, "Timestamp column")->capture_default_str();
  next->add_option("--lifecycle-column", na.columns.lifecycle, "Lifecycle column; rows not matching --keep-lifecycle are dropped");
  next->add_option("--keep-lifecycle", na.columns.keep_lifecycle, "Lifecycle value to keep")->capture_default_str();
  next->add_option("--event-id-column", na.columns.event_id, "Event id column; duplicates within a case are rejected");
  next->add_option("--synthetic-traces", na.synthetic_traces, "Traces in the synthetic log")->capture_default_str();
  next->add_option("--min-prefix", na.min_prefix, "Shortest prefix turned into a sample")->capture_default_str();
  next->add_option("--max-prefix", na.max_prefix, "Prefix rows seen by the encoder (longer prefixes keep the tail)")
      ->capture_default_str();
  next->add_option("--train-ratio", na.train_ratio, "Fraction of traces used for training")->capture_default_str();
  na_ov.attach(next, {"hidden_size", "embedding_size", "encoder_layers", "heads", "batch_size", "dropout",
                      "iterations", "factor", "encoder_attention", "seed", "allow_out_of_range", "learning_rate",
                      "threads"});

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*train) return cmd_train(train_ov, train_out, out, err);
    if (*eval) return cmd_eval(eval_ov, eval_ckpt, eval_split, out, err);
    if (*forecast) return cmd_forecast(fc_ov, fc_ckpt, fc_output, out, err);
    if (*gen) return cmd_gen_synthetic(syn, syn_output, out);
    if (*sweep) return cmd_sweep(sweep_ov, sweep_args, out, err);
    if (*bench) return cmd_bench(bench_args, out);
    if (*next) return cmd_next_activity(na_ov, na, out, err);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace qsel::cli
