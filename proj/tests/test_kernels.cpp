#include <omp.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "geotext/error.hpp"
#include "geotext/kernels.hpp"
#include "geotext/ops.hpp"
#include "geotext/rng.hpp"

using namespace geotext;
namespace K = geotext::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform() * 2.0 - 1.0;
  return v;
}

// Textbook triple loop, ascending k: the order both kernel families promise.
std::vector<double> naive(const std::vector<double>& a, const std::vector<double>& b, std::size_t m, std::size_t k,
                          std::size_t n, bool bt, bool at) {
  std::vector<double> c(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = at ? a[p * m + i] : a[i * k + p];
        const double bv = bt ? b[j * k + p] : b[p * n + j];
        s += av * bv;
      }
      c[i * n + j] = s;
    }
  return c;
}

}  // namespace

TEST_CASE("matmul worked examples") {
  const Tensor eye(Shape{2, 2}, {1, 0, 0, 1});
  const Tensor m(Shape{2, 2}, {1, 2, 3, 4});
  CHECK(matmul(eye, m) == m);
  CHECK(matmul(m, Tensor(Shape{2, 1}, {0, 1})) == Tensor(Shape{2, 1}, {2, 4}));
  CHECK(matmul(m, Tensor(Shape{2, 3})) == Tensor(Shape{2, 3}));
  CHECK_THROWS_AS(matmul(m, Tensor(Shape{3, 2})), ShapeError);
}

TEST_CASE("gemm variants equal the naive product bit for bit, parallel and serial") {
  omp_set_num_threads(4);
  const std::size_t shapes[][3] = {{1, 1, 1}, {3, 5, 7}, {17, 33, 9}, {64, 64, 64}, {130, 70, 257}};
  std::uint64_t seed = 11;
  for (const auto& s : shapes) {
    const std::size_t m = s[0], k = s[1], n = s[2];
    const auto a = random_vec(m * k, ++seed), b = random_vec(k * n, ++seed);
    const auto expect_nn = naive(a, b, m, k, n, false, false);
    std::vector<double> c(m * n), r(m * n);
    K::gemm_nn(a, b, c, m, k, n);
    K::ref::gemm_nn(a, b, r, m, k, n);
    CHECK(c == expect_nn);
    CHECK(r == expect_nn);

    const auto bt = random_vec(n * k, ++seed);
    const auto expect_nt = naive(a, bt, m, k, n, true, false);
    K::gemm_nt(a, bt, c, m, k, n);
    K::ref::gemm_nt(a, bt, r, m, k, n);
    CHECK(c == expect_nt);
    CHECK(r == expect_nt);

    const auto at = random_vec(k * m, ++seed);
    const auto expect_tn = naive(at, b, m, k, n, false, true);
    K::gemm_tn(at, b, c, m, k, n);
    K::ref::gemm_tn(at, b, r, m, k, n);
    CHECK(c == expect_tn);
    CHECK(r == expect_tn);
  }
}

TEST_CASE("softmax examples and invariants") {
  const double c = 3.7;
  const Tensor same = softmax(Tensor(Shape{3}, {c, c, c}));
  for (double v : same.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  const Tensor two = softmax(Tensor(Shape{2}, {0.0, std::log(2.0)}));
  CHECK(two.data()[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  CHECK(two.data()[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  const auto x = random_vec(40 * 13, 5);
  Tensor t(Shape{40, 13}, x);
  std::vector<double> shifted = x;
  for (auto& v : shifted) v += 123.25;
  const Tensor a = softmax(t), b = softmax(Tensor(Shape{40, 13}, shifted));
  for (std::size_t r = 0; r < 40; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < 13; ++j) {
      CHECK(a.at(r, j) >= 0.0);
      CHECK(std::abs(a.at(r, j) - b.at(r, j)) < 1e-12);
      s += a.at(r, j);
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  // Axis 0 is the transpose of axis -1 on the transpose.
  const Tensor col = softmax(t, 0);
  for (std::size_t j = 0; j < 13; ++j) {
    double s = 0.0;
    for (std::size_t r = 0; r < 40; ++r) s += col.at(r, j);
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
}

TEST_CASE("masked softmax zeroes dead keys and matches the reference") {
  omp_set_num_threads(4);
  const std::size_t rows = 200, cols = 200;
  const auto x = random_vec(rows * cols, 9);
  std::vector<unsigned char> mask(cols, 1);
  for (std::size_t j = 150; j < cols; ++j) mask[j] = 0;
  std::vector<double> y(rows * cols), r(rows * cols);
  K::softmax_rows(x, y, rows, cols, mask);
  K::ref::softmax_rows(x, r, rows, cols, mask);
  CHECK(y == r);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!mask[j]) CHECK(y[i * cols + j] == 0.0);
      s += y[i * cols + j];
    }
    CHECK(std::abs(s - 1.0) < 1e-10);
  }
}

TEST_CASE("layer norm examples and invariants") {
  const Tensor ones(Shape{4}, {1, 1, 1, 1}), zeros(Shape{4});
  const Tensor cst = layer_norm(Tensor(Shape{4}, {2.5, 2.5, 2.5, 2.5}), ones, zeros, 1e-12);
  for (double v : cst.data()) CHECK(v == 0.0);
  const Tensor pm = layer_norm(Tensor(Shape{2}, {1, -1}), Tensor(Shape{2}, {1, 1}), Tensor(Shape{2}), 1e-300);
  CHECK(pm.data()[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pm.data()[1] == doctest::Approx(-1.0).epsilon(1e-15));
  const Tensor beta(Shape{4}, {0.1, 0.2, 0.3, 0.4});
  const Tensor g0 = layer_norm(Tensor(Shape{4}, {5, -1, 2, 8}), Tensor(Shape{4}), beta, 1e-12);
  CHECK(g0 == beta);

  const std::size_t rows = 64, cols = 31;
  const auto x = random_vec(rows * cols, 21);
  std::vector<double> gamma(cols, 1.0), b(cols, 0.0);
  const Tensor y = layer_norm(Tensor(Shape{rows, cols}, x), Tensor(Shape{cols}, gamma), Tensor(Shape{cols}, b), 1e-12);
  for (std::size_t r = 0; r < rows; ++r) {
    double mean = 0.0, var = 0.0;
    for (std::size_t j = 0; j < cols; ++j) mean += y.at(r, j);
    mean /= cols;
    for (std::size_t j = 0; j < cols; ++j) var += (y.at(r, j) - mean) * (y.at(r, j) - mean);
    var /= cols;
    CHECK(std::abs(mean) < 1e-10);
    CHECK(std::abs(var - 1.0) < 1e-8);
  }

  omp_set_num_threads(4);
  const std::size_t big_rows = 600, big_cols = 96;
  const auto bx = random_vec(big_rows * big_cols, 22);
  const auto bg = random_vec(big_cols, 23), bb = random_vec(big_cols, 24);
  std::vector<double> y1(bx.size()), xh1(bx.size()), is1(big_rows), y2(bx.size()), xh2(bx.size()), is2(big_rows);
  K::layer_norm_rows(bx, bg, bb, y1, xh1, is1, big_rows, big_cols, 1e-12);
  K::ref::layer_norm_rows(bx, bg, bb, y2, xh2, is2, big_rows, big_cols, 1e-12);
  CHECK(y1 == y2);
  CHECK(xh1 == xh2);
  CHECK(is1 == is2);
}

TEST_CASE("gelu asymptotes and derivative") {
  CHECK(K::gelu_scalar(0.0) == 0.0);
  CHECK(std::abs(K::gelu_scalar(10.0) - 10.0) < 1e-6);
  CHECK(std::abs(K::gelu_scalar(-10.0)) < 1e-6);
  const double h = 1e-6;
  for (double x = -6.0; x <= 6.0; x += 0.37) {
    const double fd = (K::gelu_scalar(x + h) - K::gelu_scalar(x - h)) / (2 * h);
    CHECK(std::abs(fd - K::gelu_derivative(x)) < 1e-8);
  }
  omp_set_num_threads(4);
  const auto x = random_vec(100000, 3), dy = random_vec(100000, 4);
  std::vector<double> a(x.size()), b(x.size()), ga(x.size()), gb(x.size());
  K::gelu(x, a);
  K::ref::gelu(x, b);
  K::gelu_grad(x, dy, ga);
  K::ref::gelu_grad(x, dy, gb);
  CHECK(a == b);
  CHECK(ga == gb);
}

TEST_CASE("tensor invariants") {
  CHECK_THROWS_AS(Tensor(Shape{2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS(Tensor(Shape{2}, {1.0, std::nan("")}));
  CHECK_THROWS(Tensor(Shape{1}, {INFINITY}));
  const Tensor t(Shape{2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6.0);
}
