#pragma once

// Dense inner loops used by the autograd ops. Two implementations with the
// same signatures:
//   geotext::kernels       OpenMP-parallel over output rows
//   geotext::kernels::ref  plain serial loops, kept as the test reference
//
// Each output element is produced by exactly one thread and accumulates its
// terms in ascending index order, so the parallel kernels are bit-identical
// to the reference regardless of thread count.

#include <cstddef>
#include <span>

namespace geotext::kernels {

using In = std::span<const double>;
using Out = std::span<double>;

/// c[m x n] = a[m x k] * b[k x n]
void gemm_nn(In a, In b, Out c, std::size_t m, std::size_t k, std::size_t n);
/// c[m x n] = a[m x k] * b[n x k]^T
void gemm_nt(In a, In b, Out c, std::size_t m, std::size_t k, std::size_t n);
/// c[m x n] = a[k x m]^T * b[k x n]
void gemm_tn(In a, In b, Out c, std::size_t m, std::size_t k, std::size_t n);

/// Row softmax over `cols` columns with max subtraction. Columns j with
/// key_mask[j] == 0 get probability exactly 0; an empty key_mask means all
/// columns are live.
void softmax_rows(In x, Out y, std::size_t rows, std::size_t cols, std::span<const unsigned char> key_mask = {});

/// Per-row normalization: xhat = (x - mean) / sqrt(var + eps), y = gamma*xhat + beta.
/// `xhat` and `inv_std` are saved for the backward pass.
void layer_norm_rows(In x, In gamma, In beta, Out y, Out xhat, Out inv_std, std::size_t rows, std::size_t cols,
                     double eps);

void gelu(In x, Out y);
void gelu_grad(In x, In dy, Out dx);

namespace ref {
void gemm_nn(In a, In b, Out c, std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(In a, In b, Out c, std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(In a, In b, Out c, std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(In x, Out y, std::size_t rows, std::size_t cols, std::span<const unsigned char> key_mask = {});
void layer_norm_rows(In x, In gamma, In beta, Out y, Out xhat, Out inv_std, std::size_t rows, std::size_t cols,
                     double eps);
void gelu(In x, Out y);
void gelu_grad(In x, In dy, Out dx);
}  // namespace ref

/// Scalar gelu, tanh approximation.
double gelu_scalar(double x);
double gelu_derivative(double x);

}  // namespace geotext::kernels
