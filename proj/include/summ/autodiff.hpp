#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <string_view>
#include <vector>

#include "summ/tensor.hpp"

namespace summ {

class Graph;

enum class Op : std::uint8_t {
  Leaf,
  Param,
  Constant,
  MatVec,
  MatVecT,
  MatMul,
  MatMulNT,
  Add,
  Sub,
  Mul,
  AddRow,
  Sigmoid,
  Tanh,
  Exp,
  Log,
  Sum,
  Dot,
  Scale,
  ScaleBy,
  Concat,
  StackRows,
  Slice,
  Lookup,
  Pick,
  Softmax,
  Detach,
};

std::string_view op_name(Op op);

// Handle to a node inside a Graph. Cheap to copy; only valid while the
// owning graph is alive.
class Var {
 public:
  Var() = default;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::uint32_t id() const { return id_; }
  Graph* graph() const { return graph_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

// Append-only tape for reverse-mode differentiation. Nodes are stored in
// creation order, which is a topological order of the DAG.
//
// Not thread-safe: one graph per thread. Param leaves only hold a pointer to
// external storage, so the referenced tensors must outlive the graph and stay
// unmodified while it is in use.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves.
  Var leaf(Tensor value);
  Var param(const Tensor& external);
  Var constant(Tensor value);
  Var scalar_constant(Real v) { return constant(Tensor::scalar(v)); }

  // Linear algebra.
  Var matvec(Var w, Var x);      // W[r,c] x[c] -> [r]
  Var matvec_t(Var w, Var x);    // W[r,c]^T x[r] -> [c]
  Var matmul(Var a, Var b);      // A[m,k] B[k,n] -> [m,n]
  Var matmul_nt(Var a, Var b);   // A[m,k] B[n,k]^T -> [m,n]

  // Elementwise, identical shapes only.
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  // M[r,c] + v[c] added to every row. The only row-wise broadcast, and only
  // through this explicit op.
  Var add_row(Var m, Var v);

  Var sigmoid(Var x);
  Var tanh(Var x);
  Var exp(Var x);
  // log(max(x, floor)); gradient is zero where the floor is active. With
  // floor == 0, non-positive inputs are rejected.
  Var log(Var x, Real floor = 0);

  Var sum(Var x);
  Var dot(Var a, Var b);
  Var scale(Var x, Real s);
  Var scale_by(Var s, Var x);  // scalar node times tensor

  Var concat(std::span<const Var> parts);
  Var stack_rows(std::span<const Var> rows);
  Var slice(Var x, std::size_t offset, std::size_t length);
  Var lookup(Var table, std::size_t row);
  Var pick(Var x, std::size_t index);

  // softmax(x / temperature) over a vector.
  Var softmax(Var x, Real temperature = 1);

  // Forward identity, no gradient flows to the input.
  Var detach(Var x);

  // Accumulates d(loss)/d(node) into every node on a path to the loss.
  // Can be called once per graph.
  void backward(Var loss);

  // Gradient of the last backward() with respect to v; zeros if v is not on
  // a path to the loss.
  const Tensor& grad(Var v);

  const Tensor& value(Var v) const;
  Op op(Var v) const { return nodes_[v.id()].op; }
  std::span<const std::uint32_t> parents(Var v) const { return nodes_[v.id()].parents; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Op op = Op::Leaf;
    std::vector<std::uint32_t> parents;
    Tensor value;
    const Tensor* external = nullptr;
    Tensor grad;
    Real arg = 0;
    std::size_t index = 0;
    bool requires_grad = false;

    const Tensor& val() const { return external ? *external : value; }
  };

  Var push(Op op, std::vector<std::uint32_t> parents, Tensor value, Real arg = 0, std::size_t index = 0);
  Node& node(Var v);
  const Node& node(Var v) const;
  Tensor& grad_slot(std::uint32_t id);
  void propagate(std::uint32_t id);

  // deque keeps references to existing values stable across pushes.
  std::deque<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace summ
