#include "geotext/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

namespace geotext::kernels {

namespace {
constexpr double kSqrt2OverPi = 0.7978845608028654;
constexpr double kGeluCubic = 0.044715;
// Below this many multiply-adds the fork/join cost dominates.
constexpr std::size_t kParallelWork = 1 << 15;
}  // namespace

double gelu_scalar(double x) {
  const double u = kSqrt2OverPi * (x + kGeluCubic * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_derivative(double x) {
  const double u = kSqrt2OverPi * (x + kGeluCubic * x * x * x);
  const double t = std::tanh(u);
  const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

// ---------------------------------------------------------------- parallel

void gemm_nn(In a, In b, Out c, std::size_t m, std::size_t k, std::size_t n) {
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = C + i * n;
    std::fill(ci, ci + n, 0.0);
    const double* ai = A + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = B + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

void gemm_nt(In a, In b, Out c, std::size_t m, std::size_t k, std::size_t n) {
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = A + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = B + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      C[i * n + j] = s;
    }
  }
}

void gemm_tn(In a, In b, Out c, std::size_t m, std::size_t k, std::size_t n) {
  const double* A = a.data();
  const double* B = b.data();
  double* C = c.data();
#pragma omp parallel for schedule(static) if (m * k * n > kParallelWork)
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = C + i * n;
    std::fill(ci, ci + n, 0.0);
    for (std::size_t p = 0; p < k; ++p) {
      const double av = A[p * m + i];
      if (av == 0.0) continue;
      const double* bp = B + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

namespace {
void softmax_row(const double* x, double* y, std::size_t cols, const unsigned char* mask) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cols; ++j) {
    if (!mask || mask[j]) mx = std::max(mx, x[j]);
  }
  double sum = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double e = (!mask || mask[j]) ? std::exp(x[j] - mx) : 0.0;
    y[j] = e;
    sum += e;
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
}

void layer_norm_row(const double* x, const double* gamma, const double* beta, double* y, double* xhat,
                    double* inv_std, std::size_t cols, double eps) {
  double mean = 0.0;
  for (std::size_t j = 0; j < cols; ++j) mean += x[j];
  mean /= static_cast<double>(cols);
  double var = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double d = x[j] - mean;
    var += d * d;
  }
  var /= static_cast<double>(cols);
  const double is = 1.0 / std::sqrt(var + eps);
  *inv_std = is;
  for (std::size_t j = 0; j < cols; ++j) {
    xhat[j] = (x[j] - mean) * is;
    y[j] = gamma[j] * xhat[j] + beta[j];
  }
}
}  // namespace

void softmax_rows(In x, Out y, std::size_t rows, std::size_t cols, std::span<const unsigned char> key_mask) {
  const unsigned char* mask = key_mask.empty() ? nullptr : key_mask.data();
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::size_t r = 0; r < rows; ++r) softmax_row(x.data() + r * cols, y.data() + r * cols, cols, mask);
}

void layer_norm_rows(In x, In gamma, In beta, Out y, Out xhat, Out inv_std, std::size_t rows, std::size_t cols,
                     double eps) {
#pragma omp parallel for schedule(static) if (rows * cols > kParallelWork)
  for (std::size_t r = 0; r < rows; ++r) {
    layer_norm_row(x.data() + r * cols, gamma.data(), beta.data(), y.data() + r * cols, xhat.data() + r * cols,
                   inv_std.data() + r, cols, eps);
  }
}

void gelu(In x, Out y) {
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static) if (n > kParallelWork)
  for (std::size_t i = 0; i < n; ++i) y[i] = gelu_scalar(x[i]);
}

void gelu_grad(In x, In dy, Out dx) {
  const std::size_t n = x.size();
#pragma omp parallel for schedule(static) if (n > kParallelWork)
  for (std::size_t i = 0; i < n; ++i) dx[i] = dy[i] * gelu_derivative(x[i]);
}

// ---------------------------------------------------------------- reference

namespace ref {

void gemm_nn(In a, In b, Out c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

void gemm_nt(In a, In b, Out c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = s;
    }
  }
}

void gemm_tn(In a, In b, Out c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = s;
    }
  }
}

void softmax_rows(In x, Out y, std::size_t rows, std::size_t cols, std::span<const unsigned char> key_mask) {
  const unsigned char* mask = key_mask.empty() ? nullptr : key_mask.data();
  for (std::size_t r = 0; r < rows; ++r) softmax_row(x.data() + r * cols, y.data() + r * cols, cols, mask);
}

void layer_norm_rows(In x, In gamma, In beta, Out y, Out xhat, Out inv_std, std::size_t rows, std::size_t cols,
                     double eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    layer_norm_row(x.data() + r * cols, gamma.data(), beta.data(), y.data() + r * cols, xhat.data() + r * cols,
                   inv_std.data() + r, cols, eps);
  }
}

void gelu(In x, Out y) {
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu_scalar(x[i]);
}

void gelu_grad(In x, In dy, Out dx) {
  for (std::size_t i = 0; i < x.size(); ++i) dx[i] = dy[i] * gelu_derivative(x[i]);
}

}  // namespace ref
}  // namespace geotext::kernels
