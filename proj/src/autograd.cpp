#include "geotext/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "geotext/error.hpp"
#include "geotext/kernels.hpp"

namespace geotext::ag {

const Tensor& Var::value() const {
  require(g_ != nullptr, "value() on an unbound Var");
  return g_->value(id_);
}

Graph::Graph() {
#ifdef NDEBUG
  check_finite_ = false;
#else
  check_finite_ = true;
#endif
}

Var Graph::leaf(Tensor value, bool requires_grad) {
  nodes_.push_back(Node{Op::Leaf, std::move(value), Tensor(), requires_grad, {}, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Graph::push(Op op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
  if (check_finite_) check_finite(value, "autograd op");
  bool rg = false;
  for (auto in : inputs) {
    require(in < nodes_.size(), "op input refers to a node that does not exist yet");
    rg = rg || nodes_[in].requires_grad;
  }
  nodes_.push_back(Node{op, std::move(value), Tensor(), rg, std::move(inputs), rg ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

std::span<double> Graph::grad_buffer(std::size_t id) {
  Node& n = nodes_.at(id);
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad.data();
}

void Graph::backward(Var loss) {
  require(loss.graph() == this, "backward(): loss belongs to another graph");
  const Tensor& lv = nodes_.at(loss.id()).value;
  require(lv.size() == 1, "backward(): loss must be a scalar, got shape " + shape_str(lv.shape()));
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[loss.id()].requires_grad) return;
  grad_buffer(loss.id())[0] = 1.0;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    n.backward(*this, i);
  }
}

Tensor Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id());
  if (n.grad.empty()) return Tensor(n.value.shape());
  return n.grad;
}

namespace {

Graph& graph_of(Var a) {
  require(a.valid(), "op on an unbound Var");
  return *a.graph();
}

Graph& graph_of(Var a, Var b) {
  require(a.valid() && b.valid() && a.graph() == b.graph(), "op operands belong to different graphs");
  return *a.graph();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

void accumulate(Graph& g, std::size_t id, std::span<const double> delta) {
  if (!g.requires_grad(id)) return;
  auto buf = g.grad_buffer(id);
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += delta[i];
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "add");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += y[i];
  const auto ia = a.id(), ib = b.id();
  return g.push(Op::Add, std::move(out), {ia, ib}, [ia, ib](Graph& g, std::size_t self) {
    const auto dy = g.grad_of(self).data();
    accumulate(g, ia, dy);
    accumulate(g, ib, dy);
  });
}

Var add_bias(Var x, Var bias) {
  Graph& g = graph_of(x, bias);
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  require_matrix(xv, "add_bias");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (bv.size() != cols) throw ShapeError("add_bias: bias length " + std::to_string(bv.size()) + " != " + std::to_string(cols));
  Tensor out = xv;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] += bv[c];
  }
  const auto ix = x.id(), ib = bias.id();
  return g.push(Op::AddBias, std::move(out), {ix, ib}, [ix, ib, rows, cols](Graph& g, std::size_t self) {
    const auto dy = g.grad_of(self).data();
    accumulate(g, ix, dy);
    if (g.requires_grad(ib)) {
      auto db = g.grad_buffer(ib);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) db[c] += dy[r * cols + c];
      }
    }
  });
}

Var mul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(x, y, "mul");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= y[i];
  const auto ia = a.id(), ib = b.id();
  return g.push(Op::Mul, std::move(out), {ia, ib}, [ia, ib](Graph& g, std::size_t self) {
    const auto dy = g.grad_of(self).data();
    const Tensor& x = g.value(ia);
    const Tensor& y = g.value(ib);
    if (g.requires_grad(ia)) {
      auto da = g.grad_buffer(ia);
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += dy[i] * y[i];
    }
    if (g.requires_grad(ib)) {
      auto db = g.grad_buffer(ib);
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += dy[i] * x[i];
    }
  });
}

Var scale(Var a, double s) {
  Graph& g = graph_of(a);
  Tensor out = a.value();
  for (auto& v : out.data()) v *= s;
  const auto ia = a.id();
  return g.push(Op::Scale, std::move(out), {ia}, [ia, s](Graph& g, std::size_t self) {
    const auto dy = g.grad_of(self).data();
    auto da = g.grad_buffer(ia);
    for (std::size_t i = 0; i < da.size(); ++i) da[i] += s * dy[i];
  });
}

Var scale_rows(Var x, std::vector<double> factors) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  require_matrix(xv, "scale_rows");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  require(factors.size() == rows, "scale_rows: one factor per row required");
  Tensor out = xv;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] *= factors[r];
  }
  const auto ix = x.id();
  return g.push(Op::ScaleRows, std::move(out), {ix}, [ix, cols, factors = std::move(factors)](Graph& g, std::size_t self) {
    const auto dy = g.grad_of(self).data();
    auto dx = g.grad_buffer(ix);
    for (std::size_t r = 0; r < factors.size(); ++r) {
      for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] += factors[r] * dy[r * cols + c];
    }
  });
}

Var matmul(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_matrix(x, "matmul");
  require_matrix(y, "matmul");
  const std::size_t m = x.rows(), k = x.cols(), n = y.cols();
  if (y.rows() != k) throw ShapeError("matmul inner dimensions disagree: " + shape_str(x.shape()) + " x " + shape_str(y.shape()));
  Tensor out(Shape{m, n});
  kernels::gemm_nn(x.data(), y.data(), out.data(), m, k, n);
  const auto ia = a.id(), ib = b.id();
  return g.push(Op::MatMul, std::move(out), {ia, ib}, [ia, ib, m, k, n](Graph& g, std::size_t self) {
    const auto dy = g.grad_of(self).data();
    if (g.requires_grad(ia)) {
      std::vector<double> tmp(m * k);
      kernels::gemm_nt(dy, g.value(ib).data(), tmp, m, n, k);
      accumulate(g, ia, tmp);
    }
    if (g.requires_grad(ib)) {
      std::vector<double> tmp(k * n);
      kernels::gemm_tn(g.value(ia).data(), dy, tmp, k, m, n);
      accumulate(g, ib, tmp);
    }
  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = graph_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_matrix(x, "matmul_nt");
  require_matrix(y, "matmul_nt");
  const std::size_t m = x.rows(), k = x.cols(), n = y.rows();
  if (y.cols() != k) throw ShapeError("matmul_nt inner dimensions disagree: " + shape_str(x.shape()) + " x " + shape_str(y.shape()) + "^T");
  Tensor out(Shape{m, n});
  kernels::gemm_nt(x.data(), y.data(), out.data(), m, k, n);
  const auto ia = a.id(), ib = b.id();
  return g.push(Op::MatMulNT, std::move(out), {ia, ib}, [ia, ib, m, k, n](Graph& g, std::size_t self) {
    const auto dy = g.grad_of(self).data();
    if (g.requires_grad(ia)) {
      std::vector<double> tmp(m * k);
      kernels::gemm_nn(dy, g.value(ib).data(), tmp, m, n, k);
      accumulate(g, ia, tmp);
    }
    if (g.requires_grad(ib)) {
      std::vector<double> tmp(n * k);
      kernels::gemm_tn(dy, g.value(ia).data(), tmp, n, m, k);
      accumulate(g, ib, tmp);
    }
  });
}

Var gather_rows(Var table, std::vector<std::size_t> rows) {
  Graph& g = graph_of(table);
  const Tensor& t = table.value();
  require_matrix(t, "gather_rows");
  require(!rows.empty(), "gather_rows: no rows requested");
  const std::size_t d = t.cols();
  Tensor out(Shape{rows.size(), d});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] < t.rows(), "gather_rows: row " + std::to_string(rows[i]) + " out of range " + std::to_string(t.rows()));
    std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(rows[i] * d), d, out.data().begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  const auto it = table.id();
  return g.push(Op::Gather, std::move(out), {it}, [it, rows = std::move(rows), d](Graph& g, std::size_t self) {
    const auto dy = g.grad_of(self).data();
    auto dt = g.grad_buffer(it);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t c = 0; c < d; ++c) dt[rows[i] * d + c] += dy[i * d + c];
    }
  });
}

Var slice_cols(Var x, std::size_t first, std::size_t count) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  require_matrix(xv, "slice_cols");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  require(count > 0 && first + count <= cols, "slice_cols: column range out of bounds");
  Tensor out(Shape{rows, count});
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < count; ++c) out[r * count + c] = xv[r * cols + first + c];
  }
  const auto ix = x.id();
  return g.push(Op::SliceCols, std::move(out), {ix}, [ix, rows, cols, first, count](Graph& g, std::size_t self) {
    const auto dy = g.grad_of(self).data();
    auto dx = g.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < count; ++c) dx[r * cols + first + c] += dy[r * count + c];
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  Graph& g = graph_of(parts[0]);
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> ids, widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.graph() == &g, "concat_cols: operands belong to different graphs");
    if (p.value().rows() != rows) throw ShapeError("concat_cols: row counts disagree");
    ids.push_back(p.id());
    widths.push_back(p.value().cols());
    total += widths.back();
  }
  Tensor out(Shape{rows, total});
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t c = 0; c < widths[k]; ++c) out[r * total + off + c] = pv[r * widths[k] + c];
    }
    off += widths[k];
  }
  return g.push(Op::ConcatCols, std::move(out), ids, [ids, widths, rows, total](Graph& g, std::size_t self) {
    const auto dy = g.grad_of(self).data();
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (g.requires_grad(ids[k])) {
        auto dx = g.grad_buffer(ids[k]);
        for (std::size_t r = 0; r < rows; ++r) {
          for (std::size_t c = 0; c < widths[k]; ++c) dx[r * widths[k] + c] += dy[r * total + off + c];
        }
      }
      off += widths[k];
    }
  });
}

Var sum(Var x) {
  Graph& g = graph_of(x);
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const auto ix = x.id();
  return g.push(Op::Sum, Tensor::scalar(s), {ix}, [ix](Graph& g, std::size_t self) {
    const double dy = g.grad_of(self)[0];
    for (auto& v : g.grad_buffer(ix)) v += dy;
  });
}

Var softmax_rows(Var x, std::vector<unsigned char> key_mask) {
  Graph& g = graph_of(x);
  const Tensor& xv = x.value();
  require_matrix(xv, "softmax_rows");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (!key_mask.empty()) {
    require(key_mask.size() == cols, "softmax_rows: key mask length must equal column count");
    require(std::any_of(key_mask.begin(), key_mask.end(), [](unsigned char m) { return m != 0; }),
            "softmax_rows: key mask excludes every column");
  }
  Tensor out(xv.shape());
  kernels::softmax_rows(xv.data(), out.data(), rows, cols, key_mask);
  const auto ix = x.id();
  return g.push(Op::Softmax, std::move(out), {ix}, [ix, rows, cols](Graph& g, std::size_t self) {
    const auto dy = g.grad_of(self).data();
    const auto y = g.value(self).data();
    auto dx = g.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < cols; ++c) dot += dy[r * cols + c] * y[r * cols + c];
      for (std::size_t c = 0; c < cols; ++c) dx[r * cols + c] += y[r * cols + c] * (dy[r * cols + c] - dot);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Graph& g = graph_of(x, gamma);
  require(beta.graph() == &g, "layer_norm: operands belong to different graphs");
  require(eps > 0.0, "layer_norm: eps must be positive");
  const Tensor& xv = x.value();
  require_matrix(xv, "layer_norm");
  const std::size_t rows = xv.rows(), cols = xv.cols();
  if (gamma.value().size() != cols || beta.value().size() != cols) throw ShapeError("layer_norm: gamma/beta length must equal row width");
  Tensor out(xv.shape());
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(rows);
  kernels::layer_norm_rows(xv.data(), gamma.value().data(), beta.value().data(), out.data(), *xhat, *inv_std, rows,
                           cols, eps);
  const auto ix = x.id(), ig = gamma.id(), ib = beta.id();
  return g.push(Op::LayerNorm, std::move(out), {ix, ig, ib},
                [ix, ig, ib, rows, cols, xhat, inv_std](Graph& g, std::size_t self) {
                  const auto dy = g.grad_of(self).data();
                  const auto gam = g.value(ig).data();
                  const auto& xh = *xhat;
                  if (g.requires_grad(ig)) {
                    auto dg = g.grad_buffer(ig);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < cols; ++c) dg[c] += dy[r * cols + c] * xh[r * cols + c];
                    }
                  }
                  if (g.requires_grad(ib)) {
                    auto db = g.grad_buffer(ib);
                    for (std::size_t r = 0; r < rows; ++r) {
                      for (std::size_t c = 0; c < cols; ++c) db[c] += dy[r * cols + c];
                    }
                  }
                  if (g.requires_grad(ix)) {
                    auto dx = g.grad_buffer(ix);
                    const double n = static_cast<double>(cols);
                    for (std::size_t r = 0; r < rows; ++r) {
                      double s1 = 0.0, s2 = 0.0;
                      for (std::size_t c = 0; c < cols; ++c) {
                        const double dxh = dy[r * cols + c] * gam[c];
                        s1 += dxh;
                        s2 += dxh * xh[r * cols + c];
                      }
                      const double k = (*inv_std)[r] / n;
                      for (std::size_t c = 0; c < cols; ++c) {
                        const double dxh = dy[r * cols + c] * gam[c];
                        dx[r * cols + c] += k * (n * dxh - s1 - xh[r * cols + c] * s2);
                      }
                    }
                  }
                });
}

Var gelu(Var x) {
  Graph& g = graph_of(x);
  Tensor out(x.value().shape());
  kernels::gelu(x.value().data(), out.data());
  const auto ix = x.id();
  return g.push(Op::Gelu, std::move(out), {ix}, [ix](Graph& g, std::size_t self) {
    const auto dy = g.grad_of(self).data();
    std::vector<double> tmp(dy.size());
    kernels::gelu_grad(g.value(ix).data(), dy, tmp);
    accumulate(g, ix, tmp);
  });
}

Var cross_entropy(Var logits, std::vector<std::size_t> targets) {
  Graph& g = graph_of(logits);
  const Tensor& z = logits.value();
  require_matrix(z, "cross_entropy");
  const std::size_t rows = z.rows(), cols = z.cols();
  require(targets.size() == rows, "cross_entropy: one target per row required");
  auto probs = std::make_shared<std::vector<double>>(z.size());
  kernels::softmax_rows(z.data(), *probs, rows, cols);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    require(targets[r] < cols, "cross_entropy: target class out of range");
    // log-sum-exp form keeps the loss exact when the target prob underflows
    double mx = z[r * cols];
    for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, z[r * cols + c]);
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += std::exp(z[r * cols + c] - mx);
    loss += mx + std::log(s) - z[r * cols + targets[r]];
  }
  loss /= static_cast<double>(rows);
  const auto iz = logits.id();
  return g.push(Op::CrossEntropy, Tensor::scalar(loss), {iz},
                [iz, rows, cols, probs, targets = std::move(targets)](Graph& g, std::size_t self) {
                  const double dy = g.grad_of(self)[0] / static_cast<double>(rows);
                  auto dz = g.grad_buffer(iz);
                  for (std::size_t r = 0; r < rows; ++r) {
                    for (std::size_t c = 0; c < cols; ++c) {
                      const double onehot = (c == targets[r]) ? 1.0 : 0.0;
                      dz[r * cols + c] += dy * ((*probs)[r * cols + c] - onehot);
                    }
                  }
                });
}

Var bce_with_logits(Var logits, std::vector<double> targets) {
  Graph& g = graph_of(logits);
  const Tensor& z = logits.value();
  require(targets.size() == z.size(), "bce_with_logits: one target per logit required");
  double loss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double x = z[i];
    loss += std::max(x, 0.0) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
  }
  loss /= static_cast<double>(z.size());
  const auto iz = logits.id();
  return g.push(Op::BceLogits, Tensor::scalar(loss), {iz}, [iz, targets = std::move(targets)](Graph& g, std::size_t self) {
    const double dy = g.grad_of(self)[0] / static_cast<double>(targets.size());
    const auto z = g.value(iz).data();
    auto dz = g.grad_buffer(iz);
    for (std::size_t i = 0; i < dz.size(); ++i) {
      const double sig = 1.0 / (1.0 + std::exp(-z[i]));
      dz[i] += dy * (sig - targets[i]);
    }
  });
}

}  // namespace geotext::ag
