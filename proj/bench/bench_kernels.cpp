// Parallel kernels against their serial references. Sizes follow the model:
// rows = tokens in a batch, cols = hidden or ffn width.

#include <benchmark/benchmark.h>

#include <vector>

#include "geotext/kernels.hpp"
#include "geotext/rng.hpp"

namespace k = geotext::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  geotext::Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform() * 2 - 1;
  return v;
}

template <auto Gemm>
void gemm(benchmark::State& st) {
  const auto m = static_cast<std::size_t>(st.range(0)), kk = static_cast<std::size_t>(st.range(1)),
             n = static_cast<std::size_t>(st.range(2));
  const auto a = random_vec(m * kk, 1), b = random_vec(kk * n, 2);
  std::vector<double> c(m * n);
  for (auto _ : st) {
    Gemm(a, b, c, m, kk, n);
    benchmark::DoNotOptimize(c.data());
  }
  st.SetItemsProcessed(st.iterations() * static_cast<long>(m * kk * n));
}

template <auto Softmax>
void softmax(benchmark::State& st) {
  const auto rows = static_cast<std::size_t>(st.range(0)), cols = static_cast<std::size_t>(st.range(1));
  const auto x = random_vec(rows * cols, 3);
  std::vector<double> y(rows * cols);
  for (auto _ : st) {
    Softmax(x, y, rows, cols, {});
    benchmark::DoNotOptimize(y.data());
  }
}

template <auto Norm>
void layer_norm(benchmark::State& st) {
  const auto rows = static_cast<std::size_t>(st.range(0)), cols = static_cast<std::size_t>(st.range(1));
  const auto x = random_vec(rows * cols, 4), g = random_vec(cols, 5), b = random_vec(cols, 6);
  std::vector<double> y(rows * cols), xhat(rows * cols), inv(rows);
  for (auto _ : st) {
    Norm(x, g, b, y, xhat, inv, rows, cols, 1e-12);
    benchmark::DoNotOptimize(y.data());
  }
}

template <auto Gelu>
void gelu(benchmark::State& st) {
  const auto n = static_cast<std::size_t>(st.range(0));
  const auto x = random_vec(n, 7);
  std::vector<double> y(n);
  for (auto _ : st) {
    Gelu(x, y);
    benchmark::DoNotOptimize(y.data());
  }
}

void gemm_sizes(benchmark::internal::Benchmark* b) {
  b->Args({64, 64, 64})->Args({512, 64, 256})->Args({512, 256, 64})->Args({1024, 256, 256});
}
void row_sizes(benchmark::internal::Benchmark* b) { b->Args({64, 64})->Args({512, 256})->Args({4096, 256}); }

}  // namespace

BENCHMARK(gemm<k::gemm_nn>)->Name("gemm_nn/parallel")->Apply(gemm_sizes);
BENCHMARK(gemm<k::ref::gemm_nn>)->Name("gemm_nn/ref")->Apply(gemm_sizes);
BENCHMARK(gemm<k::gemm_nt>)->Name("gemm_nt/parallel")->Apply(gemm_sizes);
BENCHMARK(gemm<k::ref::gemm_nt>)->Name("gemm_nt/ref")->Apply(gemm_sizes);
BENCHMARK(gemm<k::gemm_tn>)->Name("gemm_tn/parallel")->Apply(gemm_sizes);
BENCHMARK(gemm<k::ref::gemm_tn>)->Name("gemm_tn/ref")->Apply(gemm_sizes);
BENCHMARK(softmax<k::softmax_rows>)->Name("softmax_rows/parallel")->Apply(row_sizes);
BENCHMARK(softmax<k::ref::softmax_rows>)->Name("softmax_rows/ref")->Apply(row_sizes);
BENCHMARK(layer_norm<k::layer_norm_rows>)->Name("layer_norm_rows/parallel")->Apply(row_sizes);
BENCHMARK(layer_norm<k::ref::layer_norm_rows>)->Name("layer_norm_rows/ref")->Apply(row_sizes);
BENCHMARK(gelu<k::gelu>)->Name("gelu/parallel")->Arg(1 << 12)->Arg(1 << 18);
BENCHMARK(gelu<k::ref::gelu>)->Name("gelu/ref")->Arg(1 << 12)->Arg(1 << 18);

BENCHMARK_MAIN();
