#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qsel/tape.hpp"

// Differentiable counterparts of the Matrix routines. Every function records
// one node on the tape shared by its operands.
namespace qsel::ad {

Var matmul(Var a, Var b);
/// a * b^T
Var matmul_nt(Var a, Var b);
Var add(Var a, Var b);
Var subtract(Var a, Var b);
/// a + row, with the 1 x C row added to every row of a.
Var add_row(Var a, Var row);
Var scale(Var a, double factor);
Var hadamard(Var a, Var b);

/// Row-wise softmax(a / scale); with causal set, entries j > i get zero weight.
Var softmax_rows(Var a, double scale, bool causal = false);
Var column_mean(Var a);
/// count copies of the 1 x C row stacked vertically.
Var broadcast_rows(Var row, std::size_t count);
Var gather_rows(Var a, std::vector<std::size_t> indices);
/// Copy of base with rows indices[i] replaced by rows i of src.
Var scatter_rows(Var base, Var src, std::vector<std::size_t> indices);
Var slice_rows(Var a, std::size_t begin, std::size_t count);
Var concat_cols(std::span<const Var> parts);

/// Per-row layer normalisation with learned 1 x C gain and offset.
Var layer_norm(Var x, Var gain, Var offset, double eps = 1e-5);
/// Gaussian error linear unit, exact erf form.
Var gelu(Var x);
/// Inverted dropout driven by the tape's random stream.
Var dropout(Var x, double rate);

Var sum(Var a);
/// Mean squared error against a detached target; 1 x 1.
Var mse_loss(Var prediction, const Matrix& target);
/// Softmax cross-entropy of 1 x C logits against a class index; 1 x 1.
Var cross_entropy(Var logits, std::size_t target);

}  // namespace qsel::ad
