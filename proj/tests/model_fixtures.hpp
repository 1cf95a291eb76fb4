#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "qsel/model.hpp"
#include "qsel/ops.hpp"

namespace fixture {

using qsel::Matrix;
using qsel::ModelConfig;

// model_dim 8, one encoder and one decoder layer, two heads, length 8.
inline ModelConfig tiny_config() {
  ModelConfig c;
  c.model_dim = 8;
  c.emb_dim = 4;
  c.enc_layers = 1;
  c.dec_layers = 1;
  c.heads = 2;
  c.batch_size = 4;
  c.dropout_rate = 0.0;
  c.iterations = 3;
  c.factor_f = 0.5;
  c.input_len = 8;
  c.label_len = 4;
  c.pred_len = 4;
  c.allow_out_of_range = true;
  return c;
}

struct Sample {
  Matrix enc, dec, target;
};

inline Sample random_sample(const ModelConfig& c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Sample s;
  s.enc = oracle::random_matrix(c.input_len, c.in_features, rng, -2, 2);
  s.dec = qsel::make_decoder_input(s.enc, c.label_len, c.pred_len);
  s.target = oracle::random_matrix(c.pred_len, c.out_features, rng);
  return s;
}

// Smallest score gap over every selection made in one inference pass.
inline double min_selection_gap(const qsel::ModelParams& p, const ModelConfig& c, const Sample& s) {
  qsel::ad::Tape tape;
  qsel::ad::SelectionLog log;
  qsel::ForwardOptions opts;
  opts.selections = &log;
  qsel::forward(qsel::bind(tape, p.weights, false), p.positional, c, s.enc, s.dec, opts);
  double gap = std::numeric_limits<double>::infinity();
  for (const auto& r : log) gap = std::min(gap, r.report.gap());
  return gap;
}

struct GradientCheck {
  double worst_relative_error = 0.0;
  std::string worst_tensor;
  double min_gap = 0.0;
  bool unselected_rows_zero = true;
  std::size_t selections = 0;
};

// Compares backward against central differences for every parameter tensor.
inline GradientCheck check_model_gradients(const ModelConfig& c, qsel::ModelParams p, const Sample& s) {
  GradientCheck out;
  out.min_gap = min_selection_gap(p, c, s);

  qsel::ad::Tape tape;
  qsel::ad::SelectionLog log;
  qsel::ForwardOptions opts;
  opts.selections = &log;
  const auto vars = qsel::bind(tape, p.weights, true);
  tape.backward(qsel::ad::mse_loss(qsel::forward(vars, p.positional, c, s.enc, s.dec, opts), s.target));

  out.selections = log.size();
  for (const auto& rec : log) {
    std::vector<bool> chosen(rec.queries.rows(), false);
    for (std::size_t i : rec.report.selected_indices) chosen[i] = true;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
      if (chosen[i]) continue;
      for (double g : rec.queries.grad().row(i))
        if (g != 0.0) out.unselected_rows_zero = false;
    }
  }

  std::vector<Matrix> analytic;
  std::vector<std::string> names;
  auto grab = [&](const std::string& name, const qsel::ad::Var& v) {
    analytic.push_back(v.grad());
    names.push_back(name);
  };
  qsel::for_each_tensor(vars, grab);

  auto loss = [&] { return oracle::metrics(s.target, qsel::forward(p, c, s.enc, s.dec)).mse; };
  const auto ptrs = qsel::tensors(p.weights);
  for (std::size_t t = 0; t < ptrs.size(); ++t) {
    const double err = oracle::relative_error(analytic[t], oracle::finite_difference(*ptrs[t], loss));
    if (err > out.worst_relative_error) {
      out.worst_relative_error = err;
      out.worst_tensor = names[t];
    }
  }
  return out;
}

// First sample seed whose selections all clear the margin.
inline Sample sample_with_margin(const qsel::ModelParams& p, const ModelConfig& c, double margin,
                                 std::uint64_t first_seed = 1) {
  for (std::uint64_t seed = first_seed;; ++seed) {
    Sample s = random_sample(c, seed);
    if (min_selection_gap(p, c, s) > margin) return s;
  }
}

}  // namespace fixture
