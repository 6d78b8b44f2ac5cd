#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "geotext/tensor.hpp"

namespace geotext::ag {

enum class Op {
  Leaf,
  Add,
  AddBias,
  Mul,
  Scale,
  ScaleRows,
  MatMul,
  MatMulNT,
  Gather,
  SliceCols,
  ConcatCols,
  Sum,
  Softmax,
  LayerNorm,
  Gelu,
  CrossEntropy,
  BceLogits,
};

class Graph;

/// Handle to a node in a Graph. Cheap to copy; valid while the graph lives.
class Var {
 public:
  Var() = default;
  std::size_t id() const noexcept { return id_; }
  Graph* graph() const noexcept { return g_; }
  const Tensor& value() const;
  bool valid() const noexcept { return g_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : g_(g), id_(id) {}
  Graph* g_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so the node
/// list is a topological order by construction and backward() walks it in
/// reverse. A Graph is used by one thread.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t self)>;

  Graph();

  /// Leaf holding a copy of `value`. Gradients are tracked iff requires_grad.
  Var leaf(Tensor value, bool requires_grad);
  Var leaf(const Tensor& value) { return leaf(value, value.requires_grad()); }

  /// Appends an op node. Used by the op functions below.
  Var push(Op op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  Op op(std::size_t id) const { return nodes_.at(id).op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Upstream gradient of node `id` (valid during backward()).
  const Tensor& grad_of(std::size_t id) const { return nodes_.at(id).grad; }
  /// Mutable gradient accumulator for an input; allocated as zeros on first use.
  std::span<double> grad_buffer(std::size_t id);

  /// Reverse accumulation from a scalar loss. Throws ContractError otherwise.
  void backward(Var loss);

  /// Gradient of any node after backward(); zeros when the node did not
  /// participate in the loss.
  Tensor grad(Var v) const;

  /// When on, every op output is checked for NaN/Inf. Defaults to on in
  /// debug builds.
  void set_check_finite(bool on) noexcept { check_finite_ = on; }

 private:
  struct Node {
    Op op;
    Tensor value;
    Tensor grad;
    bool requires_grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
  bool check_finite_;
};

Var add(Var a, Var b);
/// x[n x d] + bias[d], bias broadcast over rows.
Var add_bias(Var x, Var bias);
Var mul(Var a, Var b);
Var scale(Var a, double s);
/// Multiplies row r of a matrix by factors[r].
Var scale_rows(Var x, std::vector<double> factors);
Var matmul(Var a, Var b);
/// a[m x k] * b[n x k]^T
Var matmul_nt(Var a, Var b);
/// Rows of a 2-D table. Repeated indices accumulate their gradients.
Var gather_rows(Var table, std::vector<std::size_t> rows);
Var slice_cols(Var x, std::size_t first, std::size_t count);
Var concat_cols(std::span<const Var> parts);
Var sum(Var x);
/// Row softmax; columns whose key_mask entry is 0 are excluded (additive -inf).
Var softmax_rows(Var x, std::vector<unsigned char> key_mask = {});
Var layer_norm(Var x, Var gamma, Var beta, double eps);
Var gelu(Var x);
/// Mean over rows of -log softmax(logits)[row, target].
Var cross_entropy(Var logits, std::vector<std::size_t> targets);
/// Mean over entries of the sigmoid binary cross-entropy.
Var bce_with_logits(Var logits, std::vector<double> targets);

}  // namespace geotext::ag
