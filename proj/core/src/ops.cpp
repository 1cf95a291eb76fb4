#include "qsel/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "qsel/errors.hpp"

namespace qsel::ad {

namespace {

Tape& shared_tape(Var a) {
  if (!a.valid()) throw ContractError("operation on an unbound Var");
  return *a.tape();
}

Tape& shared_tape(Var a, Var b) {
  Tape& t = shared_tape(a);
  if (b.tape() != &t) throw ContractError("operands live on different tapes");
  return t;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = shared_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(qsel::matmul(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, qsel::matmul_nt(g, tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, qsel::matmul_tn(tp.value(ia), g));
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = shared_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(qsel::matmul_nt(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, qsel::matmul(g, tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, qsel::matmul_tn(g, tp.value(ia)));
  });
}

Var add(Var a, Var b) {
  Tape& t = shared_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(qsel::add(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, tp.grad(self));
  });
}

Var subtract(Var a, Var b) {
  Tape& t = shared_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(qsel::subtract(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    tp.accumulate(ia, tp.grad(self));
    tp.accumulate(ib, qsel::scaled(tp.grad(self), -1.0));
  });
}

Var add_row(Var a, Var row) {
  Tape& t = shared_tape(a, row);
  const Matrix& r = row.value();
  if (r.rows() != 1 || r.cols() != a.cols()) {
    throw DimensionError("add_row: cannot broadcast " + shape_of(r) + " over " + shape_of(a.value()));
  }
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += r(0, j);
  const std::size_t ia = a.id(), ir = row.id();
  return t.record(std::move(out), {ia, ir}, [ia, ir](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    tp.accumulate(ia, g);
    if (tp.requires_grad(ir)) {
      Matrix acc(1, g.cols());
      for (std::size_t i = 0; i < g.rows(); ++i)
        for (std::size_t j = 0; j < g.cols(); ++j) acc(0, j) += g(i, j);
      tp.accumulate(ir, acc);
    }
  });
}

Var scale(Var a, double factor) {
  Tape& t = shared_tape(a);
  const std::size_t ia = a.id();
  return t.record(qsel::scaled(a.value(), factor), {ia}, [ia, factor](Tape& tp, std::size_t self) {
    tp.accumulate(ia, qsel::scaled(tp.grad(self), factor));
  });
}

Var hadamard(Var a, Var b) {
  Tape& t = shared_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return t.record(qsel::hadamard(a.value(), b.value()), {ia, ib}, [ia, ib](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    if (tp.requires_grad(ia)) tp.accumulate(ia, qsel::hadamard(g, tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, qsel::hadamard(g, tp.value(ia)));
  });
}

Var softmax_rows(Var a, double scale, bool causal) {
  Tape& t = shared_tape(a);
  Matrix logits = a.value();
  if (causal) apply_causal_mask(logits);
  const std::size_t ia = a.id();
  return t.record(qsel::softmax_rows(logits, scale), {ia}, [ia, scale](Tape& tp, std::size_t self) {
    const Matrix& y = tp.value(self);
    const Matrix& g = tp.grad(self);
    Matrix dx(y.rows(), y.cols());
    for (std::size_t i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols(); ++j) dx(i, j) = y(i, j) * (g(i, j) - dot) / scale;
    }
    tp.accumulate(ia, dx);
  });
}

Var column_mean(Var a) {
  Tape& t = shared_tape(a);
  const std::size_t ia = a.id();
  return t.record(qsel::column_mean(a.value()), {ia}, [ia](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix& acc = tp.grad_accumulator(ia);
    const double inv = 1.0 / static_cast<double>(acc.rows());
    for (std::size_t i = 0; i < acc.rows(); ++i)
      for (std::size_t j = 0; j < acc.cols(); ++j) acc(i, j) += g(0, j) * inv;
  });
}

Var broadcast_rows(Var row, std::size_t count) {
  Tape& t = shared_tape(row);
  const Matrix& r = row.value();
  if (r.rows() != 1) throw DimensionError("broadcast_rows: expected a row, got " + shape_of(r));
  Matrix out(count, r.cols());
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < r.cols(); ++j) out(i, j) = r(0, j);
  const std::size_t ir = row.id();
  return t.record(std::move(out), {ir}, [ir](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix acc(1, g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) acc(0, j) += g(i, j);
    tp.accumulate(ir, acc);
  });
}

Var gather_rows(Var a, std::vector<std::size_t> indices) {
  Tape& t = shared_tape(a);
  Matrix out = qsel::gather_rows(a.value(), indices);
  const std::size_t ia = a.id();
  return t.record(std::move(out), {ia}, [ia, idx = std::move(indices)](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix& acc = tp.grad_accumulator(ia);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) acc(idx[i], j) += g(i, j);
  });
}

Var scatter_rows(Var base, Var src, std::vector<std::size_t> indices) {
  Tape& t = shared_tape(base, src);
  const Matrix& b = base.value();
  const Matrix& s = src.value();
  if (b.cols() != s.cols() || s.rows() != indices.size()) {
    throw DimensionError("scatter_rows: " + std::to_string(indices.size()) + " rows of " +
                         shape_of(s) + " into " + shape_of(b));
  }
  std::vector<bool> overwritten(b.rows(), false);
  Matrix out = b;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= b.rows() || overwritten[indices[i]]) {
      throw ArgumentError("scatter_rows: indices must be distinct and in range");
    }
    overwritten[indices[i]] = true;
    for (std::size_t j = 0; j < b.cols(); ++j) out(indices[i], j) = s(i, j);
  }
  const std::size_t ib = base.id(), is = src.id();
  return t.record(std::move(out), {ib, is},
                  [ib, is, idx = std::move(indices), mask = std::move(overwritten)](Tape& tp, std::size_t self) {
                    const Matrix& g = tp.grad(self);
                    if (tp.requires_grad(ib)) {
                      Matrix& acc = tp.grad_accumulator(ib);
                      for (std::size_t i = 0; i < g.rows(); ++i) {
                        if (mask[i]) continue;
                        for (std::size_t j = 0; j < g.cols(); ++j) acc(i, j) += g(i, j);
                      }
                    }
                    if (tp.requires_grad(is)) {
                      Matrix& acc = tp.grad_accumulator(is);
                      for (std::size_t i = 0; i < idx.size(); ++i)
                        for (std::size_t j = 0; j < g.cols(); ++j) acc(i, j) += g(idx[i], j);
                    }
                  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Tape& t = shared_tape(a);
  const std::size_t ia = a.id();
  return t.record(qsel::slice_rows(a.value(), begin, count), {ia}, [ia, begin](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    Matrix& acc = tp.grad_accumulator(ia);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) acc(begin + i, j) += g(i, j);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat_cols: nothing to concatenate");
  Tape& t = shared_tape(parts.front());
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  std::vector<std::size_t> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    if (p.tape() != &t) throw ContractError("operands live on different tapes");
    if (p.rows() != rows) {
      throw DimensionError("concat_cols: row mismatch " + shape_of(parts.front().value()) + " vs " +
                           shape_of(p.value()));
    }
    ids.push_back(p.id());
    offsets.push_back(cols);
    cols += p.cols();
  }
  Matrix out(rows, cols);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& v = parts[k].value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < v.cols(); ++j) out(i, offsets[k] + j) = v(i, j);
  }
  return t.record(std::move(out), ids, [ids, offsets](Tape& tp, std::size_t self) {
    const Matrix& g = tp.grad(self);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.requires_grad(ids[k])) continue;
      Matrix& acc = tp.grad_accumulator(ids[k]);
      for (std::size_t i = 0; i < acc.rows(); ++i)
        for (std::size_t j = 0; j < acc.cols(); ++j) acc(i, j) += g(i, offsets[k] + j);
    }
  });
}

Var layer_norm(Var x, Var gain, Var offset, double eps) {
  Tape& t = shared_tape(x, gain);
  if (offset.tape() != &t) throw ContractError("operands live on different tapes");
  const Matrix& in = x.value();
  const std::size_t n = in.cols();
  if (gain.rows() != 1 || gain.cols() != n || offset.rows() != 1 || offset.cols() != n) {
    throw DimensionError("layer_norm: gain/offset " + shape_of(gain.value()) + ", " +
                         shape_of(offset.value()) + " do not match " + shape_of(in));
  }
  Matrix normed(in.rows(), n);
  std::vector<double> inv_std(in.rows());
  for (std::size_t i = 0; i < in.rows(); ++i) {
    double mean = 0.0;
    for (double v : in.row(i)) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : in.row(i)) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) normed(i, j) = (in(i, j) - mean) * inv_std[i];
  }
  const Matrix& g = gain.value();
  const Matrix& b = offset.value();
  Matrix out(in.rows(), n);
  for (std::size_t i = 0; i < in.rows(); ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = normed(i, j) * g(0, j) + b(0, j);

  const std::size_t ix = x.id(), ig = gain.id(), ib = offset.id();
  return t.record(std::move(out), {ix, ig, ib},
                  [ix, ig, ib, normed = std::move(normed), inv_std = std::move(inv_std)](Tape& tp, std::size_t self) {
                    const Matrix& up = tp.grad(self);
                    const Matrix& gv = tp.value(ig);
                    const std::size_t rows = up.rows(), cols = up.cols();
                    if (tp.requires_grad(ig) || tp.requires_grad(ib)) {
                      Matrix dg(1, cols), db(1, cols);
                      for (std::size_t i = 0; i < rows; ++i)
                        for (std::size_t j = 0; j < cols; ++j) {
                          dg(0, j) += up(i, j) * normed(i, j);
                          db(0, j) += up(i, j);
                        }
                      tp.accumulate(ig, dg);
                      tp.accumulate(ib, db);
                    }
                    if (!tp.requires_grad(ix)) return;
                    Matrix& dx = tp.grad_accumulator(ix);
                    const double inv_n = 1.0 / static_cast<double>(cols);
                    for (std::size_t i = 0; i < rows; ++i) {
                      double mean_d = 0.0, mean_dn = 0.0;
                      for (std::size_t j = 0; j < cols; ++j) {
                        const double d = up(i, j) * gv(0, j);
                        mean_d += d;
                        mean_dn += d * normed(i, j);
                      }
                      mean_d *= inv_n;
                      mean_dn *= inv_n;
                      for (std::size_t j = 0; j < cols; ++j) {
                        const double d = up(i, j) * gv(0, j);
                        dx(i, j) += inv_std[i] * (d - mean_d - normed(i, j) * mean_dn);
                      }
                    }
                  });
}

Var gelu(Var x) {
  Tape& t = shared_tape(x);
  Matrix out = x.value();
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  const std::size_t ix = x.id();
  return t.record(std::move(out), {ix}, [ix](Tape& tp, std::size_t self) {
    const Matrix& in = tp.value(ix);
    const Matrix& g = tp.grad(self);
    Matrix dx(in.rows(), in.cols());
    const double inv_sqrt_2pi = std::numbers::inv_sqrtpi / std::numbers::sqrt2;
    auto iv = in.values();
    auto gv = g.values();
    auto dv = dx.values();
    for (std::size_t k = 0; k < iv.size(); ++k) {
      const double v = iv[k];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dv[k] = gv[k] * (cdf + v * pdf);
    }
    tp.accumulate(ix, dx);
  });
}

Var dropout(Var x, double rate) {
  if (rate < 0.0 || rate >= 1.0) throw ArgumentError("dropout: rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  Tape& t = shared_tape(x);
  std::bernoulli_distribution keep(1.0 - rate);
  const double boost = 1.0 / (1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  for (double& m : mask.values()) m = keep(t.rng()) ? boost : 0.0;
  Matrix out = qsel::hadamard(x.value(), mask);
  const std::size_t ix = x.id();
  return t.record(std::move(out), {ix}, [ix, mask = std::move(mask)](Tape& tp, std::size_t self) {
    tp.accumulate(ix, qsel::hadamard(tp.grad(self), mask));
  });
}

Var sum(Var a) {
  Tape& t = shared_tape(a);
  const std::size_t ia = a.id();
  return t.record(Matrix(1, 1, qsel::sum(a.value())), {ia}, [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad(self)(0, 0);
    for (double& v : tp.grad_accumulator(ia).values()) v += g;
  });
}

Var mse_loss(Var prediction, const Matrix& target) {
  Tape& t = shared_tape(prediction);
  const Matrix& p = prediction.value();
  if (!p.same_shape(target)) {
    throw DimensionError("mse_loss: prediction " + shape_of(p) + " vs target " + shape_of(target));
  }
  Matrix diff = qsel::subtract(p, target);
  double acc = 0.0;
  for (double d : diff.values()) acc += d * d;
  const double n = static_cast<double>(diff.size());
  const std::size_t ip = prediction.id();
  return t.record(Matrix(1, 1, acc / n), {ip}, [ip, n, diff = std::move(diff)](Tape& tp, std::size_t self) {
    tp.accumulate(ip, qsel::scaled(diff, 2.0 * tp.grad(self)(0, 0) / n));
  });
}

Var cross_entropy(Var logits, std::size_t target) {
  Tape& t = shared_tape(logits);
  const Matrix& z = logits.value();
  if (z.rows() != 1) throw DimensionError("cross_entropy: expected 1 x C logits, got " + shape_of(z));
  if (target >= z.cols()) throw ArgumentError("cross_entropy: target class out of range");
  Matrix probs = qsel::softmax_rows(z, 1.0);
  double top = z(0, 0);
  for (double v : z.values()) top = std::max(top, v);
  double total = 0.0;
  for (double v : z.values()) total += std::exp(v - top);
  const double loss = top + std::log(total) - z(0, target);
  const std::size_t iz = logits.id();
  return t.record(Matrix(1, 1, loss), {iz}, [iz, target, probs = std::move(probs)](Tape& tp, std::size_t self) {
    Matrix d = qsel::scaled(probs, tp.grad(self)(0, 0));
    d(0, target) -= tp.grad(self)(0, 0);
    tp.accumulate(iz, d);
  });
}

}  // namespace qsel::ad
