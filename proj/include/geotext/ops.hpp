#pragma once

#include "geotext/tensor.hpp"

// Forward-only tensor math. The autograd graph (autograd.hpp) records the
// same computations with backward rules.

namespace geotext {

/// [m x k] * [k x n]. Rank-1 operands are treated as a single row.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Softmax along `axis` (negative counts from the back).
Tensor softmax(const Tensor& v, int axis = -1);

/// Normalizes each slice along the last axis, then applies gamma/beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

Tensor gelu(const Tensor& x);

}  // namespace geotext
