#include "geotext/ops.hpp"

#include <cmath>
#include <limits>

#include "geotext/error.hpp"
#include "geotext/kernels.hpp"

namespace geotext {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() > 2 || b.rank() > 2 || a.rank() == 0 || b.rank() == 0) {
    throw ShapeError("matmul expects rank 1 or 2 operands, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor c(Shape{m, n});
  kernels::gemm_nn(a.data(), b.data(), c.data(), m, k, n);
  return c;
}

Tensor softmax(const Tensor& v, int axis) {
  const int rank = static_cast<int>(v.rank());
  if (rank == 0) return Tensor::scalar(1.0);
  const int ax = axis < 0 ? axis + rank : axis;
  require(ax >= 0 && ax < rank, "softmax axis out of range");
  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= v.dim(i);
  for (int i = ax + 1; i < rank; ++i) inner *= v.dim(i);
  const std::size_t n = v.dim(ax);

  Tensor out(v.shape());
  if (inner == 1) {
    kernels::softmax_rows(v.data(), out.data(), outer, n);
    return out;
  }
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * n * inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, v[base + j * inner]);
      double sum = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = std::exp(v[base + j * inner] - mx);
        out[base + j * inner] = e;
        sum += e;
      }
      for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= sum;
    }
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require(eps > 0.0, "layer_norm eps must be positive");
  require(x.rank() >= 1, "layer_norm needs rank >= 1");
  const std::size_t d = x.shape().back();
  if (gamma.size() != d || beta.size() != d) throw ShapeError("layer_norm gamma/beta length must equal last dim");
  const std::size_t rows = x.size() / d;
  Tensor y(x.shape()), xhat(x.shape()), inv_std(Shape{rows});
  kernels::layer_norm_rows(x.data(), gamma.data(), beta.data(), y.data(), xhat.data(), inv_std.data(), rows, d, eps);
  return y;
}

Tensor gelu(const Tensor& x) {
  Tensor y(x.shape());
  kernels::gelu(x.data(), y.data());
  return y;
}

}  // namespace geotext
