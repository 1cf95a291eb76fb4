#include "qsel/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "qsel/attention.hpp"
#include "qsel/errors.hpp"
#include "qsel/matrix.hpp"
#include "text_util.hpp"

namespace qsel {

namespace {

Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(rows, cols);
  for (double& x : m.values()) x = n(rng);
  return m;
}

// Keeps the optimiser from discarding a result.
volatile double sink = 0.0;

template <class Fn>
double median_time(const BenchSettings& s, Fn&& fn) {
  for (std::size_t i = 0; i < s.warmup; ++i) sink = sink + sum(fn());
  std::vector<double> t;
  for (std::size_t i = 0; i < s.reps; ++i) {
    const auto start = std::chrono::steady_clock::now();
    const Matrix out = fn();
    const auto stop = std::chrono::steady_clock::now();
    sink = sink + out(0, 0);
    t.push_back(std::chrono::duration<double>(stop - start).count());
  }
  return median(std::move(t));
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

KernelTiming time_kernels(std::size_t length, std::size_t dim, double factor, const BenchSettings& settings) {
  if (settings.reps == 0) throw ArgumentError("time_kernels: reps must be positive");
  KernelTiming r;
  r.length = length;
  r.dim = dim;
  r.factor = factor;
  r.selected = selection_count(length, factor);
  std::mt19937_64 rng(settings.seed);
  const Matrix q = random_matrix(length, dim, rng);
  const Matrix k = random_matrix(length, dim, rng);
  const Matrix v = random_matrix(length, dim, rng);
  const double scale = std::sqrt(static_cast<double>(dim));
  r.full_median_s = median_time(settings, [&] { return full_attention(q, k, v, scale); });
  r.selector_median_s =
      median_time(settings, [&] { return query_selector_attention(q, k, v, factor, scale); });
  return r;
}

std::string timings_csv(std::span<const KernelTiming> rows) {
  std::string out = "length,dim,factor,selected,full_ms,selector_ms,ratio\n";
  for (const KernelTiming& t : rows) {
    out += std::to_string(t.length) + "," + std::to_string(t.dim) + "," + detail::format_real(t.factor) + "," +
           std::to_string(t.selected) + "," + detail::format_real(t.full_median_s * 1e3) + "," +
           detail::format_real(t.selector_median_s * 1e3) + "," + detail::format_real(t.ratio()) + "\n";
  }
  return out;
}

}  // namespace qsel
