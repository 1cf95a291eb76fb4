// One PASS/FAIL line per acceptance criterion. Exit status is the number of
// failures, so ctest reports the run as failed when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "model_fixtures.hpp"
#include "oracles.hpp"
#include "qsel/attention.hpp"
#include "qsel/bench.hpp"
#include "qsel/errors.hpp"
#include "qsel/eventlog.hpp"
#include "qsel/model.hpp"
#include "qsel/training.hpp"

namespace fs = std::filesystem;
using qsel::Matrix;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

// Every metric report produced during the run, for the identity check.
std::vector<qsel::MetricReport> g_reports;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

std::string fmt(double x) {
  std::ostringstream s;
  s.precision(4);
  s << x;
  return s.str();
}

int cli(std::vector<std::string> args, std::string* out = nullptr) {
  args.insert(args.begin(), "qsel");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o, e;
  const int code = qsel::cli::run(static_cast<int>(argv.size()), argv.data(), o, e);
  if (out) *out = o.str();
  if (code != 0) std::cerr << e.str();
  return code;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("qsel_acceptance_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Verdict kernel_rows() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<std::size_t> len(4, 64), width(2, 16);
  const double factors[] = {0.0, 0.25, 0.5, 0.9};
  double worst = 0.0;
  std::size_t instances = 0, attempt = 0;
  while (instances < 100) {
    const std::size_t L = len(rng), d = width(rng), e = width(rng);
    const double f = factors[attempt++ % 4];
    if (std::floor((1.0 - f) * static_cast<double>(L) + 1e-9) < 1.0) continue;
    const Matrix q = oracle::random_matrix(L, d, rng), k = oracle::random_matrix(L, d, rng);
    const Matrix v = oracle::random_matrix(L, e, rng);
    const double scale = std::sqrt(static_cast<double>(d));
    qsel::SelectionReport rep;
    const Matrix a = qsel::query_selector_attention(q, k, v, f, scale, &rep);
    const Matrix full = oracle::attention(q, k, v, scale);
    const Matrix mean = oracle::column_mean(v);
    std::vector<bool> chosen(L, false);
    for (std::size_t i : rep.selected_indices) chosen[i] = true;
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < e; ++j) worst = std::max(worst, std::abs(a(i, j) - (chosen[i] ? full(i, j) : mean(0, j))));
    ++instances;
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-12 && t < 10.0, "max |diff| " + fmt(worst) + " (tol 1e-12), " + fmt(t) + " s (limit 10)"};
}

Verdict subset_oracle() {
  std::mt19937_64 rng(202);
  double worst = 0.0;
  std::size_t cases = 0;
  for (std::size_t L = 1; L <= 8; ++L)
    for (std::size_t l = 1; l <= L; ++l)
      for (int t = 0; t < 50; ++t) {
        const Matrix k = oracle::random_matrix(L, 1 + t % 5, rng, -5, 5);
        worst = std::max(worst, qsel::max_abs_diff(qsel::top_l_column_mean(k, l), oracle::top_l_mean_bruteforce(k, l)));
        ++cases;
      }
  return {worst <= 1e-12, std::to_string(cases) + " cases, max |diff| " + fmt(worst) + " (tol 1e-12)"};
}

Verdict degenerate() {
  std::mt19937_64 rng(303);
  double kernel = 0.0;
  for (int t = 0; t < 50; ++t) {
    const std::size_t L = 2 + t, d = 2 + t % 9;
    const Matrix q = oracle::random_matrix(L, d, rng), k = oracle::random_matrix(L, d, rng);
    const Matrix v = oracle::random_matrix(L, 3, rng);
    const double s = std::sqrt(static_cast<double>(d));
    kernel = std::max(kernel, qsel::max_abs_diff(qsel::query_selector_attention(q, k, v, 0.0, s),
                                                 qsel::full_attention(q, k, v, s)));
  }
  double model = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    auto qs = fixture::tiny_config();
    qs.factor_f = 0.0;
    auto full = qs;
    full.sites.encoder_self = qsel::AttentionMode::full;
    full.sites.decoder_cross = qsel::AttentionMode::full;
    const auto p = qsel::init_params(qs, seed);
    const auto s = fixture::random_sample(qs, seed + 100);
    model = std::max(model, qsel::max_abs_diff(qsel::forward(p, qs, s.enc, s.dec), qsel::forward(p, full, s.enc, s.dec)));
  }
  return {kernel <= 1e-12 && model <= 1e-9,
          "kernel " + fmt(kernel) + " (tol 1e-12), model " + fmt(model) + " (tol 1e-9)"};
}

Verdict gradients() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto c = fixture::tiny_config();
  const auto p = qsel::init_params(c, 11);
  const auto s = fixture::sample_with_margin(p, c, 1e-3);
  const auto r = fixture::check_model_gradients(c, p, s);
  const double t = seconds_since(t0);
  return {r.worst_relative_error < 1e-4 && r.unselected_rows_zero && r.min_gap > 1e-3 && r.selections > 0 && t < 60.0,
          "worst rel err " + fmt(r.worst_relative_error) + " at " + r.worst_tensor + " (tol 1e-4), gap " +
              fmt(r.min_gap) + ", unselected grads zero: " + (r.unselected_rows_zero ? "yes" : "no") + ", " + fmt(t) +
              " s (limit 60)"};
}

Verdict determinism() {
  const fs::path d = scratch("determinism");
  const std::string data = (d / "series.csv").string();
  if (cli({"gen-synthetic", "--length", "600", "--output", data}) != 0) return {false, "gen-synthetic failed"};
  std::ofstream(d / "run.cfg") << "data = " << data << "\n"
                               << "hidden_size = 16\nembedding_size = 8\nencoder_layers = 1\ndecoder_layers = 1\n"
                               << "heads = 2\nbatch_size = 8\ndropout = 0.05\niterations = 2\nfactor = 0.5\n"
                               << "input_len = 48\nlabel_len = 24\npred_len = 12\nallow_out_of_range = true\n"
                               << "max_train_windows = 64\nmax_eval_windows = 32\nthreads = 2\n";
  for (const char* run : {"a", "b"})
    if (cli({"train", "--config", (d / "run.cfg").string(), "--out", (d / run).string()}) != 0)
      return {false, std::string("train run ") + run + " failed"};
  bool same = true;
  std::string which;
  for (const char* f : {"best", "metrics.json", "history.csv"}) {
    const std::string a = slurp(d / "a" / f), b = slurp(d / "b" / f);
    if (a.empty() || a != b) {
      same = false;
      which += std::string(" ") + f;
    }
  }
  fs::remove_all(d);
  return {same, same ? "checkpoint, metrics.json and history.csv byte-identical" : "differs:" + which};
}

Verdict performance() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto r = qsel::time_kernels(720, 64, 0.9, {30, 3, 1});
  const double t = seconds_since(t0);
  return {r.selected == 72 && r.ratio() >= 2.0 && t < 60.0,
          "l " + std::to_string(r.selected) + ", full " + fmt(r.full_median_s * 1e3) + " ms, selector " +
              fmt(r.selector_median_s * 1e3) + " ms, speed-up " + fmt(r.ratio()) + "x (need 2x), " + fmt(t) +
              " s (limit 60)"};
}

Verdict desk_learning() {
  const double cpu0 = cpu_seconds();
  qsel::SyntheticSpec spec;
  spec.length = 4000;
  spec.period = 24;
  spec.noise_std = 0.1;
  spec.trend_slope = 1e-4;
  const auto raw = qsel::gen_synthetic(spec);
  const auto splits = qsel::split_rows(raw.rows(), {});
  const auto frame = qsel::normalize_apply(raw, qsel::normalize_fit(raw, splits.train));
  const auto cols = qsel::plan_columns(frame, qsel::ForecastMode::univariate);

  qsel::ModelConfig qs;
  qs.model_dim = 32;
  qs.emb_dim = 16;
  qs.enc_layers = 1;
  qs.dec_layers = 1;
  qs.heads = 2;
  qs.batch_size = 24;
  qs.dropout_rate = 0.0;
  qs.iterations = 10;
  qs.factor_f = 0.8;
  qs.input_len = 96;
  qs.label_len = 48;
  qs.pred_len = 24;
  qs.allow_out_of_range = true;
  auto full = qs;
  full.sites.encoder_self = qsel::AttentionMode::full;
  full.sites.decoder_cross = qsel::AttentionMode::full;

  const qsel::WindowSpec ws{96, 48, 24, 1};
  const auto train_w = qsel::subsample(qsel::make_windows(frame, ws, splits.train, cols), 480);
  const auto val_w = qsel::subsample(qsel::make_windows(frame, ws, splits.val, cols), 200);
  const auto test_w = qsel::subsample(qsel::make_windows(frame, ws, splits.test, cols), 200);
  qsel::TrainOptions opts;
  opts.adam.learning_rate = 1e-3;

  auto score = [&](const qsel::ModelConfig& c) {
    const auto r = qsel::train(c, train_w, val_w, opts);
    const auto m = qsel::evaluate(r.params, c, test_w);
    g_reports.push_back(m);
    return m.mse;
  };
  const double mse_qs = score(qs);
  const double mse_full = score(full);
  const std::vector<std::size_t> pos{0};
  const auto persist = qsel::evaluate_predictor(
      test_w, [&](const qsel::WindowSample& w) { return qsel::persistence_forecast(w, pos, 24); });
  g_reports.push_back(persist);
  const double cpu = cpu_seconds() - cpu0;
  return {mse_qs < persist.mse && mse_qs <= 1.5 * mse_full && cpu <= 600.0,
          "selector mse " + fmt(mse_qs) + ", full " + fmt(mse_full) + " (ratio " + fmt(mse_qs / mse_full) +
              ", limit 1.5), persistence " + fmt(persist.mse) + ", " + fmt(cpu) + " s CPU (limit 600)"};
}

Verdict sweep_grid() {
  const fs::path d = scratch("sweep");
  const std::string csv_path = (d / "grid.csv").string();
  const int code = cli({"sweep", "--factors", "0.5,0.6,0.7,0.8,0.9", "--lengths", "240,360,480,600,720,840",
                        "--hidden-size", "16", "--embedding-size", "8", "--encoder-layers", "1", "--decoder-layers",
                        "1", "--heads", "2", "--batch-size", "4", "--dropout", "0", "--iterations", "1",
                        "--label-len", "48", "--pred-len", "24", "--max-train-windows", "8", "--max-eval-windows", "4",
                        "--allow-out-of-range", "true", "--output", csv_path});
  if (code != 0) return {false, "sweep exited " + std::to_string(code)};
  std::istringstream in(slurp(csv_path));
  fs::remove_all(d);
  std::string line;
  std::getline(in, line);
  if (line != "factor,input_len,mse,mae,runtime_s") return {false, "unexpected header '" + line + "'"};
  std::size_t rows = 0, bad = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
    if (f.size() != 5) {
      ++bad;
      continue;
    }
    try {
      const double mse = std::stod(f[2]), mae = std::stod(f[3]);
      if (!std::isfinite(mse) || !std::isfinite(mae)) ++bad;
      qsel::MetricReport r;
      r.mse = mse;
      r.mae = mae;
      g_reports.push_back(r);
    } catch (const std::exception&) {
      ++bad;  // "skipped" or unparseable
    }
  }
  return {rows == 30 && bad == 0, std::to_string(rows) + " of 30 cells, " + std::to_string(bad) + " non-numeric"};
}

Verdict event_log() {
  const auto t0 = std::chrono::steady_clock::now();
  int fixtures_ok = 0;
  // Shuffled rows come back time-ordered.
  try {
    const auto log = qsel::parse_event_log(
        "CaseID,Activity,CompleteTimestamp\n"
        "c2,B,2020-01-01 03:00:00\nc1,C,2020-01-01 02:00:00\nc2,A,2020-01-01 01:00:00\n"
        "c1,A,2020-01-01 00:00:00\nc1,B,2020-01-01 01:00:00\n");
    qsel::check_invariants(log);
    const auto& e = log.traces[0].events;
    if (log.traces[0].case_id == "c2" && log.alphabet[e[0].activity] == "A" && log.alphabet[e[1].activity] == "B")
      ++fixtures_ok;
  } catch (const qsel::Error&) {
  }
  // Duplicate event ids within a case are rejected.
  try {
    qsel::ColumnMap cols;
    cols.event_id = "EventID";
    qsel::parse_event_log(
        "CaseID,Activity,CompleteTimestamp,EventID\n"
        "c1,A,2020-01-01 00:00:00,x\nc1,B,2020-01-01 01:00:00,x\n",
        cols);
  } catch (const qsel::DataError&) {
    ++fixtures_ok;
  }
  // A hand-built log with time running backwards violates the contract.
  try {
    auto log = qsel::gen_process_log({{"A", "B"}, 1, 60, 1});
    std::swap(log.traces[0].events[0].timestamp, log.traces[0].events[1].timestamp);
    qsel::check_invariants(log);
  } catch (const qsel::ContractError&) {
    ++fixtures_ok;
  }

  const auto log = qsel::gen_process_log({{"A", "B", "C"}, 200, 3600, 1});
  const auto [train_log, test_log] = qsel::split_traces(log, 0.8);
  const auto scale = qsel::fit_delta_scale(train_log);
  const auto train_set = qsel::build_prefix_dataset(train_log, 1, scale);
  const auto test_set = qsel::build_prefix_dataset(test_log, 1, scale);
  qsel::ModelConfig base;
  base.model_dim = 16;
  base.emb_dim = 8;
  base.enc_layers = 1;
  base.heads = 2;
  base.batch_size = 16;
  base.dropout_rate = 0.0;
  base.iterations = 10;
  base.factor_f = 0.5;
  base.allow_out_of_range = true;
  const auto c = qsel::classifier_config(base, train_set.width, 8);
  qsel::AdamSettings adam;
  adam.learning_rate = 1e-2;
  const auto r = qsel::train_classifier(c, train_set.classes, train_set.samples, adam);
  const double acc = qsel::classifier_accuracy(r.params, c, test_set.samples);
  const double t = seconds_since(t0);
  return {fixtures_ok == 3 && acc >= 0.95 && t <= 120.0,
          std::to_string(fixtures_ok) + "/3 adversarial fixtures, held-out accuracy " + fmt(acc) + " (need 0.95), " +
              fmt(t) + " s (limit 120)"};
}

Verdict metric_identities() {
  std::mt19937_64 rng(1010);
  double worst = 0.0;
  std::size_t violations = 0;
  for (int t = 0; t < 100; ++t) {
    const Matrix y = oracle::random_matrix(1 + t % 24, 1 + t % 7, rng, -10, 10);
    const Matrix yh = oracle::random_matrix(y.rows(), y.cols(), rng, -10, 10);
    const auto r = qsel::metrics(y, yh);
    const auto o = oracle::metrics(y, yh);
    worst = std::max({worst, std::abs(r.mse - o.mse), std::abs(r.mae - o.mae)});
    g_reports.push_back(r);
  }
  for (const auto& r : g_reports)
    if (r.mae * r.mae > r.mse) ++violations;
  return {worst <= 1e-12 && violations == 0,
          "max |diff| " + fmt(worst) + " (tol 1e-12), mae^2 <= mse on " + std::to_string(g_reports.size() - violations) +
              "/" + std::to_string(g_reports.size()) + " reports"};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"kernel row-equivalence", kernel_rows},
      {"subset oracle", subset_oracle},
      {"degenerate equivalence", degenerate},
      {"gradient correctness", gradients},
      {"determinism", determinism},
      {"performance", performance},
      {"desk-scale learning", desk_learning},
      {"sweep protocol", sweep_grid},
      {"event-log harness", event_log},
      {"metric identities", metric_identities},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    if (!v.pass) ++failures;
    std::cout << (v.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << v.detail
              << std::endl;
  }
  return failures;
}
