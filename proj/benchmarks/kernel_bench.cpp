#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "qsel/attention.hpp"

namespace {

struct Inputs {
  qsel::Matrix q, k, v;
};

Inputs make_inputs(std::size_t length, std::size_t dim) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  Inputs in{qsel::Matrix(length, dim), qsel::Matrix(length, dim), qsel::Matrix(length, dim)};
  for (qsel::Matrix* m : {&in.q, &in.k, &in.v})
    for (std::size_t i = 0; i < length; ++i)
      for (std::size_t j = 0; j < dim; ++j) (*m)(i, j) = n(rng);
  return in;
}

void BM_FullAttention(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const auto in = make_inputs(len, 64);
  for (auto _ : state) benchmark::DoNotOptimize(qsel::full_attention(in.q, in.k, in.v, 8.0));
  state.SetComplexityN(state.range(0));
}

// Factor is passed in hundredths.
void BM_QuerySelector(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  const double f = static_cast<double>(state.range(1)) / 100.0;
  const auto in = make_inputs(len, 64);
  for (auto _ : state) benchmark::DoNotOptimize(qsel::query_selector_attention(in.q, in.k, in.v, f, 8.0));
  state.counters["selected"] = static_cast<double>(qsel::selection_count(len, f));
}

}  // namespace

BENCHMARK(BM_FullAttention)->Arg(96)->Arg(240)->Arg(480)->Arg(720)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_QuerySelector)
    ->ArgsProduct({{96, 240, 480, 720}, {50, 80, 90}})
    ->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
