#include "qsel/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "qsel/errors.hpp"

namespace qsel {

std::string_view to_string(AttentionMode mode) {
  return mode == AttentionMode::full ? "full" : "query_selector";
}

AttentionMode parse_attention_mode(std::string_view text) {
  if (text == "full") return AttentionMode::full;
  if (text == "query_selector" || text == "qs") return AttentionMode::query_selector;
  throw ArgumentError("unknown attention mode '" + std::string(text) +
                      "' (expected full or query_selector)");
}

std::size_t selection_count(std::size_t length, double factor) {
  if (!(factor >= 0.0 && factor < 1.0)) {
    throw ArgumentError("query selector factor must lie in [0, 1), got " + std::to_string(factor));
  }
  const double kept = (1.0 - factor) * static_cast<double>(length);
  const auto l = static_cast<std::size_t>(std::floor(kept + 1e-9));
  if (l == 0) {
    std::ostringstream msg;
    msg << "factor too large for sequence length: floor((1 - " << factor << ") * " << length
        << ") = 0";
    throw ArgumentError(msg.str());
  }
  return std::min(l, length);
}

double SelectionReport::gap() const {
  if (selected_indices.size() >= scores.cols()) return std::numeric_limits<double>::infinity();
  std::vector<bool> chosen(scores.cols(), false);
  double weakest = std::numeric_limits<double>::infinity();
  for (std::size_t i : selected_indices) {
    chosen[i] = true;
    weakest = std::min(weakest, scores(0, i));
  }
  double strongest = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < scores.cols(); ++j)
    if (!chosen[j]) strongest = std::max(strongest, scores(0, j));
  return weakest - strongest;
}

Matrix full_attention(const Matrix& q, const Matrix& k, const Matrix& v, double scale, bool causal) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw DimensionError("full_attention: incompatible q " + shape_of(q) + ", k " + shape_of(k) +
                         ", v " + shape_of(v));
  }
  Matrix logits = matmul_nt(q, k);
  if (causal) apply_causal_mask(logits);
  return matmul(softmax_rows(logits, scale), v);
}

SelectionReport select_queries(const Matrix& q, const Matrix& k, double factor) {
  if (q.cols() != k.cols()) {
    throw DimensionError("select_queries: q " + shape_of(q) + " and k " + shape_of(k) +
                         " differ in width");
  }
  SelectionReport report;
  report.l = selection_count(q.rows(), factor);
  // Cross-attention may have fewer keys than kept queries.
  report.k_hat = top_l_column_mean(k, std::min(report.l, k.rows()));
  report.scores = matmul_nt(report.k_hat, q);
  report.selected_indices = top_l_indices(report.scores, report.l);
  return report;
}

Matrix query_selector_attention(const Matrix& q, const Matrix& k, const Matrix& v, double factor,
                                double scale, SelectionReport* report) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw DimensionError("query_selector_attention: incompatible q " + shape_of(q) + ", k " +
                         shape_of(k) + ", v " + shape_of(v));
  }
  SelectionReport sel = select_queries(q, k, factor);
  const Matrix q_hat = gather_rows(q, sel.selected_indices);
  const Matrix a = matmul(softmax_rows(matmul_nt(q_hat, k), scale), v);
  const Matrix v_bar = column_mean(v);

  Matrix out(q.rows(), v.cols());
  for (std::size_t i = 0; i < out.rows(); ++i)
    std::copy(v_bar.values().begin(), v_bar.values().end(), out.row(i).begin());
  for (std::size_t i = 0; i < sel.selected_indices.size(); ++i)
    std::copy(a.row(i).begin(), a.row(i).end(), out.row(sel.selected_indices[i]).begin());

  if (report != nullptr) *report = std::move(sel);
  return out;
}

void validate(const AttentionParams& params) {
  const auto& w = params.weights;
  const std::size_t heads = w.w_q.size();
  if (heads == 0) throw ArgumentError("attention needs at least one head");
  if (w.w_k.size() != heads || w.w_v.size() != heads) {
    throw DimensionError("attention: per-head projection counts differ");
  }
  const Matrix& ref = w.w_q.front();
  for (std::size_t h = 0; h < heads; ++h) {
    for (const Matrix* m : {&w.w_q[h], &w.w_k[h], &w.w_v[h]}) {
      if (!m->same_shape(ref)) {
        throw DimensionError("attention: head " + std::to_string(h) + " projection " +
                             shape_of(*m) + " differs from " + shape_of(ref));
      }
    }
  }
  if (w.w_o.rows() != heads * ref.cols()) {
    throw DimensionError("attention: output projection " + shape_of(w.w_o) + " expects " +
                         std::to_string(heads * ref.cols()) + " input rows");
  }
  if (!(params.factor_f >= 0.0 && params.factor_f < 1.0)) {
    throw ArgumentError("attention: factor_f must lie in [0, 1)");
  }
}

Matrix multi_head(const Matrix& x_q, const Matrix& x_kv, const AttentionParams& params, bool causal) {
  validate(params);
  const auto& w = params.weights;
  if (x_q.cols() != w.w_q.front().rows() || x_kv.cols() != w.w_k.front().rows()) {
    throw DimensionError("multi_head: inputs " + shape_of(x_q) + ", " + shape_of(x_kv) +
                         " do not match projections " + shape_of(w.w_q.front()));
  }
  const std::size_t head_dim = w.w_q.front().cols();
  const double scale = std::sqrt(static_cast<double>(head_dim));
  Matrix concat(x_q.rows(), head_dim * params.heads());
  for (std::size_t h = 0; h < params.heads(); ++h) {
    const Matrix q = matmul(x_q, w.w_q[h]);
    const Matrix k = matmul(x_kv, w.w_k[h]);
    const Matrix v = matmul(x_kv, w.w_v[h]);
    const Matrix out = params.mode == AttentionMode::full
                           ? full_attention(q, k, v, scale, causal)
                           : query_selector_attention(q, k, v, params.factor_f, scale);
    for (std::size_t i = 0; i < out.rows(); ++i)
      std::copy(out.row(i).begin(), out.row(i).end(), concat.row(i).begin() + static_cast<std::ptrdiff_t>(h * head_dim));
  }
  return matmul(concat, w.w_o);
}

namespace ad {

Var full_attention(Var q, Var k, Var v, double scale, bool causal) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw DimensionError("full_attention: incompatible q " + shape_of(q.value()) + ", k " +
                         shape_of(k.value()) + ", v " + shape_of(v.value()));
  }
  return matmul(softmax_rows(matmul_nt(q, k), scale, causal), v);
}

Var query_selector_attention(Var q, Var k, Var v, double factor, double scale, SelectionLog* log) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw DimensionError("query_selector_attention: incompatible q " + shape_of(q.value()) +
                         ", k " + shape_of(k.value()) + ", v " + shape_of(v.value()));
  }
  SelectionReport sel = select_queries(q.value(), k.value(), factor);
  Var q_hat = gather_rows(q, sel.selected_indices);
  Var a = matmul(softmax_rows(matmul_nt(q_hat, k), scale), v);
  Var filled = broadcast_rows(column_mean(v), q.rows());
  Var out = scatter_rows(filled, a, sel.selected_indices);
  if (log != nullptr) log->push_back({q, std::move(sel)});
  return out;
}

Var multi_head(Var x_q, Var x_kv, const AttentionWeights<Var>& weights, AttentionMode mode,
               double factor, bool causal, SelectionLog* log) {
  const std::size_t heads = weights.w_q.size();
  if (heads == 0 || weights.w_k.size() != heads || weights.w_v.size() != heads) {
    throw DimensionError("multi_head: per-head projection counts differ");
  }
  const std::size_t head_dim = weights.w_q.front().cols();
  const double scale = std::sqrt(static_cast<double>(head_dim));
  std::vector<Var> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Var q = matmul(x_q, weights.w_q[h]);
    Var k = matmul(x_kv, weights.w_k[h]);
    Var v = matmul(x_kv, weights.w_v[h]);
    outs.push_back(mode == AttentionMode::full
                       ? full_attention(q, k, v, scale, causal)
                       : query_selector_attention(q, k, v, factor, scale, log));
  }
  return matmul(heads == 1 ? outs.front() : concat_cols(outs), weights.w_o);
}

}  // namespace ad

}  // namespace qsel
