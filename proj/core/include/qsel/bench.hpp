#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace qsel {

struct KernelTiming {
  std::size_t length = 0;
  std::size_t dim = 0;
  double factor = 0.0;
  std::size_t selected = 0;  // queries computed by the selector kernel
  double full_median_s = 0.0;
  double selector_median_s = 0.0;

  double ratio() const { return full_median_s / selector_median_s; }
};

struct BenchSettings {
  std::size_t reps = 30;
  std::size_t warmup = 3;  // discarded runs before timing
  std::uint64_t seed = 1;
};

double median(std::vector<double> values);

/// Forward time of full attention and the query-selector kernel on the same
/// random L x dim inputs; medians over reps, warmup runs discarded.
KernelTiming time_kernels(std::size_t length, std::size_t dim, double factor, const BenchSettings& settings = {});

/// length,dim,factor,selected,full_ms,selector_ms,ratio
std::string timings_csv(std::span<const KernelTiming> rows);

}  // namespace qsel
