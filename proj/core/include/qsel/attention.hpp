#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "qsel/matrix.hpp"
#include "qsel/ops.hpp"

namespace qsel {

enum class AttentionMode { full, query_selector };

std::string_view to_string(AttentionMode mode);
/// Accepts "full" and "query_selector"; throws ArgumentError otherwise.
AttentionMode parse_attention_mode(std::string_view text);

/// Number of queries kept by the selector: floor((1 - factor) * length).
///
/// The product is rounded to 1e-9 before flooring so that, e.g., factor 0.9
/// and length 720 keep 72 queries rather than 71 from binary rounding.
/// Throws ArgumentError for a factor outside [0, 1) or a zero result.
std::size_t selection_count(std::size_t length, double factor);

/// Outcome of the query-selection stage.
struct SelectionReport {
  std::size_t l = 0;
  std::vector<std::size_t> selected_indices;
  /// 1 x D key summary; entry d is the mean of the l largest keys in column d.
  Matrix k_hat;
  /// 1 x L scores k_hat * q^T.
  Matrix scores;

  /// Score difference between the weakest selected query and the strongest
  /// rejected one; +infinity when every query is selected.
  double gap() const;
};

/// softmax(q k^T / scale) v. With causal set, key j is hidden from query i for j > i.
Matrix full_attention(const Matrix& q, const Matrix& k, const Matrix& v, double scale,
                      bool causal = false);

SelectionReport select_queries(const Matrix& q, const Matrix& k, double factor);

/// Sparse attention that evaluates only the selected queries.
///
/// Selected rows hold the corresponding rows of full attention; every other
/// row holds the column mean of v.
Matrix query_selector_attention(const Matrix& q, const Matrix& k, const Matrix& v, double factor,
                                double scale, SelectionReport* report = nullptr);

/// Per-head projections. Templated so the model can hold either concrete
/// matrices or tape variables with the same layout.
template <class T>
struct AttentionWeights {
  std::vector<T> w_q;
  std::vector<T> w_k;
  std::vector<T> w_v;
  T w_o;
};

struct AttentionParams {
  AttentionWeights<Matrix> weights;
  AttentionMode mode = AttentionMode::full;
  double factor_f = 0.0;

  std::size_t heads() const noexcept { return weights.w_q.size(); }
};

/// Throws DimensionError/ArgumentError when the projections are inconsistent.
void validate(const AttentionParams& params);

/// Multi-head attention with scale sqrt(head width). Query-selector mode ignores causal.
Matrix multi_head(const Matrix& x_q, const Matrix& x_kv, const AttentionParams& params,
                  bool causal = false);

namespace ad {

/// One query-selection event observed during a forward pass.
struct SelectionRecord {
  Var queries;
  SelectionReport report;
};
using SelectionLog = std::vector<SelectionRecord>;

Var full_attention(Var q, Var k, Var v, double scale, bool causal = false);

/// Selection indices and scores are computed on values and never differentiated.
Var query_selector_attention(Var q, Var k, Var v, double factor, double scale,
                             SelectionLog* log = nullptr);

Var multi_head(Var x_q, Var x_kv, const AttentionWeights<Var>& weights, AttentionMode mode,
               double factor, bool causal, SelectionLog* log = nullptr);

}  // namespace ad

}  // namespace qsel
