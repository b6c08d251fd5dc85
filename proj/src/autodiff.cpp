#include "summ/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace summ {

namespace {

[[noreturn]] void shape_fail(std::string_view op, const Shape& a, const Shape& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " + shape_str(b));
}

[[noreturn]] void shape_fail(std::string_view op, const Shape& a) {
  throw ShapeError(std::string(op) + ": unsupported shape " + shape_str(a));
}

bool is_vec(const Tensor& t) { return t.rank() == 1; }
bool is_mat(const Tensor& t) { return t.rank() == 2; }

Real sigmoid_scalar(Real x) {
  if (x >= 0) {
    const Real e = std::exp(-x);
    return Real(1) / (Real(1) + e);
  }
  const Real e = std::exp(x);
  return e / (Real(1) + e);
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Param: return "param";
    case Op::Constant: return "constant";
    case Op::MatVec: return "matvec";
    case Op::MatVecT: return "matvec_t";
    case Op::MatMul: return "matmul";
    case Op::MatMulNT: return "matmul_nt";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::AddRow: return "add_row";
    case Op::Sigmoid: return "sigmoid";
    case Op::Tanh: return "tanh";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Sum: return "sum";
    case Op::Dot: return "dot";
    case Op::Scale: return "scale";
    case Op::ScaleBy: return "scale_by";
    case Op::Concat: return "concat";
    case Op::StackRows: return "stack_rows";
    case Op::Slice: return "slice";
    case Op::Lookup: return "lookup";
    case Op::Pick: return "pick";
    case Op::Softmax: return "softmax";
    case Op::Detach: return "detach";
  }
  return "?";
}

const Tensor& Var::value() const {
  if (!graph_) throw std::logic_error("value() on an unbound Var");
  return graph_->value(*this);
}

Graph::Node& Graph::node(Var v) {
  if (v.graph() != this || v.id() >= nodes_.size()) throw std::logic_error("Var does not belong to this graph");
  return nodes_[v.id()];
}

const Graph::Node& Graph::node(Var v) const {
  if (v.graph() != this || v.id() >= nodes_.size()) throw std::logic_error("Var does not belong to this graph");
  return nodes_[v.id()];
}

const Tensor& Graph::value(Var v) const { return node(v).val(); }

Var Graph::push(Op op, std::vector<std::uint32_t> parents, Tensor value, Real arg, std::size_t index) {
  if (backward_done_) throw std::logic_error("graph is frozen after backward()");
  Node n;
  n.op = op;
  n.arg = arg;
  n.index = index;
  for (auto p : parents) n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  if (op == Op::Detach || op == Op::Constant) n.requires_grad = false;
  if (op == Op::Leaf || op == Op::Param) n.requires_grad = true;
  n.parents = std::move(parents);
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Var Graph::leaf(Tensor value) { return push(Op::Leaf, {}, std::move(value)); }

Var Graph::param(const Tensor& external) {
  Var v = push(Op::Param, {}, Tensor());
  nodes_.back().external = &external;
  return v;
}

Var Graph::constant(Tensor value) { return push(Op::Constant, {}, std::move(value)); }

Var Graph::matvec(Var w, Var x) {
  const Tensor& W = value(w);
  const Tensor& X = value(x);
  if (!is_mat(W) || !is_vec(X) || W.cols() != X.size()) shape_fail("matvec", W.shape(), X.shape());
  const std::size_t r = W.rows(), c = W.cols();
  Tensor out({r});
  const Real* wp = W.data().data();
  const Real* xp = X.data().data();
  for (std::size_t i = 0; i < r; ++i) {
    Real acc = 0;
    const Real* row = wp + i * c;
    for (std::size_t j = 0; j < c; ++j) acc += row[j] * xp[j];
    out[i] = acc;
  }
  return push(Op::MatVec, {w.id(), x.id()}, std::move(out));
}

Var Graph::matvec_t(Var w, Var x) {
  const Tensor& W = value(w);
  const Tensor& X = value(x);
  if (!is_mat(W) || !is_vec(X) || W.rows() != X.size()) shape_fail("matvec_t", W.shape(), X.shape());
  const std::size_t r = W.rows(), c = W.cols();
  Tensor out({c});
  for (std::size_t i = 0; i < r; ++i) {
    const Real xi = X[i];
    const Real* row = W.data().data() + i * c;
    for (std::size_t j = 0; j < c; ++j) out[j] += row[j] * xi;
  }
  return push(Op::MatVecT, {w.id(), x.id()}, std::move(out));
}

Var Graph::matmul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!is_mat(A) || !is_mat(B) || A.cols() != B.rows()) shape_fail("matmul", A.shape(), B.shape());
  const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = A.at(i, p);
      for (std::size_t j = 0; j < n; ++j) out.at(i, j) += aip * B.at(p, j);
    }
  return push(Op::MatMul, {a.id(), b.id()}, std::move(out));
}

Var Graph::matmul_nt(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!is_mat(A) || !is_mat(B) || A.cols() != B.cols()) shape_fail("matmul_nt", A.shape(), B.shape());
  const std::size_t m = A.rows(), k = A.cols(), n = B.rows();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += A.at(i, p) * B.at(j, p);
      out.at(i, j) = acc;
    }
  return push(Op::MatMulNT, {a.id(), b.id()}, std::move(out));
}

Var Graph::add(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.shape() != B.shape()) shape_fail("add", A.shape(), B.shape());
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += B[i];
  return push(Op::Add, {a.id(), b.id()}, std::move(out));
}

Var Graph::sub(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.shape() != B.shape()) shape_fail("sub", A.shape(), B.shape());
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B[i];
  return push(Op::Sub, {a.id(), b.id()}, std::move(out));
}

Var Graph::mul(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (A.shape() != B.shape()) shape_fail("mul", A.shape(), B.shape());
  Tensor out = A;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= B[i];
  return push(Op::Mul, {a.id(), b.id()}, std::move(out));
}

Var Graph::add_row(Var m, Var v) {
  const Tensor& M = value(m);
  const Tensor& V = value(v);
  if (!is_mat(M) || !is_vec(V) || M.cols() != V.size()) shape_fail("add_row", M.shape(), V.shape());
  Tensor out = M;
  for (std::size_t i = 0; i < M.rows(); ++i)
    for (std::size_t j = 0; j < M.cols(); ++j) out.at(i, j) += V[j];
  return push(Op::AddRow, {m.id(), v.id()}, std::move(out));
}

Var Graph::sigmoid(Var x) {
  Tensor out = value(x);
  for (auto& e : out.storage()) e = sigmoid_scalar(e);
  return push(Op::Sigmoid, {x.id()}, std::move(out));
}

Var Graph::tanh(Var x) {
  Tensor out = value(x);
  for (auto& e : out.storage()) e = std::tanh(e);
  return push(Op::Tanh, {x.id()}, std::move(out));
}

Var Graph::exp(Var x) {
  Tensor out = value(x);
  for (auto& e : out.storage()) e = std::exp(e);
  return push(Op::Exp, {x.id()}, std::move(out));
}

Var Graph::log(Var x, Real floor) {
  Tensor out = value(x);
  for (auto& e : out.storage()) {
    if (floor <= 0 && e <= 0) throw std::domain_error("log: non-positive input " + std::to_string(e));
    e = std::log(std::max(e, floor));
  }
  return push(Op::Log, {x.id()}, std::move(out), floor);
}

Var Graph::sum(Var x) {
  Real acc = 0;
  for (auto e : value(x).data()) acc += e;
  return push(Op::Sum, {x.id()}, Tensor::scalar(acc));
}

Var Graph::dot(Var a, Var b) {
  const Tensor& A = value(a);
  const Tensor& B = value(b);
  if (!is_vec(A) || A.shape() != B.shape()) shape_fail("dot", A.shape(), B.shape());
  Real acc = 0;
  for (std::size_t i = 0; i < A.size(); ++i) acc += A[i] * B[i];
  return push(Op::Dot, {a.id(), b.id()}, Tensor::scalar(acc));
}

Var Graph::scale(Var x, Real s) {
  Tensor out = value(x);
  for (auto& e : out.storage()) e *= s;
  return push(Op::Scale, {x.id()}, std::move(out), s);
}

Var Graph::scale_by(Var s, Var x) {
  const Tensor& S = value(s);
  if (!S.is_scalar()) shape_fail("scale_by", S.shape(), value(x).shape());
  Tensor out = value(x);
  const Real k = S[0];
  for (auto& e : out.storage()) e *= k;
  return push(Op::ScaleBy, {s.id(), x.id()}, std::move(out));
}

Var Graph::concat(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  std::vector<std::uint32_t> ids;
  std::vector<Real> data;
  for (const auto& p : parts) {
    const Tensor& t = value(p);
    if (!is_vec(t)) shape_fail("concat", t.shape());
    data.insert(data.end(), t.data().begin(), t.data().end());
    ids.push_back(p.id());
  }
  return push(Op::Concat, std::move(ids), Tensor::vector(std::move(data)));
}

Var Graph::stack_rows(std::span<const Var> rows) {
  if (rows.empty()) throw ShapeError("stack_rows: no inputs");
  const Shape first = value(rows[0]).shape();
  if (first.size() != 1) shape_fail("stack_rows", first);
  std::vector<std::uint32_t> ids;
  std::vector<Real> data;
  data.reserve(rows.size() * first[0]);
  for (const auto& r : rows) {
    const Tensor& t = value(r);
    if (t.shape() != first) shape_fail("stack_rows", first, t.shape());
    data.insert(data.end(), t.data().begin(), t.data().end());
    ids.push_back(r.id());
  }
  return push(Op::StackRows, std::move(ids), Tensor::matrix(rows.size(), first[0], std::move(data)));
}

Var Graph::slice(Var x, std::size_t offset, std::size_t length) {
  const Tensor& X = value(x);
  if (!is_vec(X) || length == 0 || offset + length > X.size())
    throw ShapeError("slice: range [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                     ") out of bounds for " + shape_str(X.shape()));
  std::vector<Real> data(X.data().begin() + static_cast<std::ptrdiff_t>(offset),
                         X.data().begin() + static_cast<std::ptrdiff_t>(offset + length));
  return push(Op::Slice, {x.id()}, Tensor::vector(std::move(data)), 0, offset);
}

Var Graph::lookup(Var table, std::size_t row) {
  const Tensor& T = value(table);
  if (!is_mat(T)) shape_fail("lookup", T.shape());
  if (row >= T.rows())
    throw ShapeError("lookup: row " + std::to_string(row) + " out of range for " + shape_str(T.shape()));
  const auto c = T.cols();
  std::vector<Real> data(T.data().begin() + static_cast<std::ptrdiff_t>(row * c),
                         T.data().begin() + static_cast<std::ptrdiff_t>((row + 1) * c));
  return push(Op::Lookup, {table.id()}, Tensor::vector(std::move(data)), 0, row);
}

Var Graph::pick(Var x, std::size_t index) {
  const Tensor& X = value(x);
  if (!is_vec(X) || index >= X.size())
    throw ShapeError("pick: index " + std::to_string(index) + " out of range for " + shape_str(X.shape()));
  return push(Op::Pick, {x.id()}, Tensor::scalar(X[index]), 0, index);
}

Var Graph::softmax(Var x, Real temperature) {
  if (!(temperature > 0)) throw std::invalid_argument("softmax: temperature must be positive");
  const Tensor& X = value(x);
  if (!is_vec(X)) shape_fail("softmax", X.shape());
  Tensor out = X;
  Real mx = X[0];
  for (auto e : X.data()) mx = std::max(mx, e);
  Real z = 0;
  for (auto& e : out.storage()) {
    e = std::exp((e - mx) / temperature);
    z += e;
  }
  for (auto& e : out.storage()) e /= z;
  return push(Op::Softmax, {x.id()}, std::move(out), temperature);
}

Var Graph::detach(Var x) { return push(Op::Detach, {x.id()}, value(x)); }

Tensor& Graph::grad_slot(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.size() == 0) n.grad = Tensor(n.val().shape());
  return n.grad;
}

const Tensor& Graph::grad(Var v) {
  node(v);
  return grad_slot(v.id());
}

void Graph::backward(Var loss) {
  const Node& ln = node(loss);
  if (!ln.val().is_scalar()) throw ShapeError("backward: loss must be scalar, got " + shape_str(ln.val().shape()));
  if (backward_done_) throw std::logic_error("backward() already called on this graph");
  backward_done_ = true;
  grad_slot(loss.id())[0] = 1;
  for (std::int64_t id = loss.id(); id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad || n.grad.size() == 0 || n.parents.empty()) continue;
    propagate(static_cast<std::uint32_t>(id));
  }
}

void Graph::propagate(std::uint32_t id) {
  Node& n = nodes_[id];
  const Tensor& g = n.grad;
  const Tensor& y = n.val();
  auto wants = [&](std::size_t k) { return nodes_[n.parents[k]].requires_grad; };
  auto pval = [&](std::size_t k) -> const Tensor& { return nodes_[n.parents[k]].val(); };

  switch (n.op) {
    case Op::Leaf:
    case Op::Param:
    case Op::Constant:
    case Op::Detach:
      break;
    case Op::MatVec: {
      const Tensor& W = pval(0);
      const Tensor& X = pval(1);
      const std::size_t r = W.rows(), c = W.cols();
      if (wants(0)) {
        Tensor& gw = grad_slot(n.parents[0]);
        for (std::size_t i = 0; i < r; ++i) {
          const Real gi = g[i];
          Real* row = gw.data().data() + i * c;
          for (std::size_t j = 0; j < c; ++j) row[j] += gi * X[j];
        }
      }
      if (wants(1)) {
        Tensor& gx = grad_slot(n.parents[1]);
        for (std::size_t i = 0; i < r; ++i) {
          const Real gi = g[i];
          const Real* row = W.data().data() + i * c;
          for (std::size_t j = 0; j < c; ++j) gx[j] += row[j] * gi;
        }
      }
      break;
    }
    case Op::MatVecT: {
      const Tensor& W = pval(0);
      const Tensor& X = pval(1);
      const std::size_t r = W.rows(), c = W.cols();
      if (wants(0)) {
        Tensor& gw = grad_slot(n.parents[0]);
        for (std::size_t i = 0; i < r; ++i) {
          const Real xi = X[i];
          Real* row = gw.data().data() + i * c;
          for (std::size_t j = 0; j < c; ++j) row[j] += xi * g[j];
        }
      }
      if (wants(1)) {
        Tensor& gx = grad_slot(n.parents[1]);
        for (std::size_t i = 0; i < r; ++i) {
          Real acc = 0;
          const Real* row = W.data().data() + i * c;
          for (std::size_t j = 0; j < c; ++j) acc += row[j] * g[j];
          gx[i] += acc;
        }
      }
      break;
    }
    case Op::MatMul: {
      const Tensor& A = pval(0);
      const Tensor& B = pval(1);
      const std::size_t m = A.rows(), k = A.cols(), cols = B.cols();
      if (wants(0)) {
        Tensor& ga = grad_slot(n.parents[0]);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            Real acc = 0;
            for (std::size_t j = 0; j < cols; ++j) acc += g.at(i, j) * B.at(p, j);
            ga.at(i, p) += acc;
          }
      }
      if (wants(1)) {
        Tensor& gb = grad_slot(n.parents[1]);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const Real aip = A.at(i, p);
            for (std::size_t j = 0; j < cols; ++j) gb.at(p, j) += aip * g.at(i, j);
          }
      }
      break;
    }
    case Op::MatMulNT: {
      const Tensor& A = pval(0);
      const Tensor& B = pval(1);
      const std::size_t m = A.rows(), k = A.cols(), cols = B.rows();
      if (wants(0)) {
        Tensor& ga = grad_slot(n.parents[0]);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < cols; ++j) {
            const Real gij = g.at(i, j);
            for (std::size_t p = 0; p < k; ++p) ga.at(i, p) += gij * B.at(j, p);
          }
      }
      if (wants(1)) {
        Tensor& gb = grad_slot(n.parents[1]);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < cols; ++j) {
            const Real gij = g.at(i, j);
            for (std::size_t p = 0; p < k; ++p) gb.at(j, p) += gij * A.at(i, p);
          }
      }
      break;
    }
    case Op::Add:
      if (wants(0)) grad_slot(n.parents[0]).axpy(1, g);
      if (wants(1)) grad_slot(n.parents[1]).axpy(1, g);
      break;
    case Op::Sub:
      if (wants(0)) grad_slot(n.parents[0]).axpy(1, g);
      if (wants(1)) grad_slot(n.parents[1]).axpy(-1, g);
      break;
    case Op::Mul: {
      const Tensor& A = pval(0);
      const Tensor& B = pval(1);
      if (wants(0)) {
        Tensor& ga = grad_slot(n.parents[0]);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
      }
      if (wants(1)) {
        Tensor& gb = grad_slot(n.parents[1]);
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
      }
      break;
    }
    case Op::AddRow: {
      if (wants(0)) grad_slot(n.parents[0]).axpy(1, g);
      if (wants(1)) {
        Tensor& gv = grad_slot(n.parents[1]);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) gv[j] += g.at(i, j);
      }
      break;
    }
    case Op::Sigmoid:
      if (wants(0)) {
        Tensor& gx = grad_slot(n.parents[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i] * (1 - y[i]);
      }
      break;
    case Op::Tanh:
      if (wants(0)) {
        Tensor& gx = grad_slot(n.parents[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (1 - y[i] * y[i]);
      }
      break;
    case Op::Exp:
      if (wants(0)) {
        Tensor& gx = grad_slot(n.parents[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * y[i];
      }
      break;
    case Op::Log:
      if (wants(0)) {
        const Tensor& X = pval(0);
        Tensor& gx = grad_slot(n.parents[0]);
        for (std::size_t i = 0; i < g.size(); ++i)
          if (X[i] > n.arg) gx[i] += g[i] / X[i];
      }
      break;
    case Op::Sum:
      if (wants(0)) {
        Tensor& gx = grad_slot(n.parents[0]);
        for (auto& e : gx.storage()) e += g[0];
      }
      break;
    case Op::Dot: {
      const Tensor& A = pval(0);
      const Tensor& B = pval(1);
      if (wants(0)) grad_slot(n.parents[0]).axpy(g[0], B);
      if (wants(1)) grad_slot(n.parents[1]).axpy(g[0], A);
      break;
    }
    case Op::Scale:
      if (wants(0)) grad_slot(n.parents[0]).axpy(n.arg, g);
      break;
    case Op::ScaleBy: {
      const Tensor& S = pval(0);
      const Tensor& X = pval(1);
      if (wants(0)) {
        Real acc = 0;
        for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * X[i];
        grad_slot(n.parents[0])[0] += acc;
      }
      if (wants(1)) grad_slot(n.parents[1]).axpy(S[0], g);
      break;
    }
    case Op::Concat: {
      std::size_t off = 0;
      for (std::size_t k = 0; k < n.parents.size(); ++k) {
        const std::size_t len = pval(k).size();
        if (wants(k)) {
          Tensor& gp = grad_slot(n.parents[k]);
          for (std::size_t i = 0; i < len; ++i) gp[i] += g[off + i];
        }
        off += len;
      }
      break;
    }
    case Op::StackRows: {
      const std::size_t c = g.cols();
      for (std::size_t k = 0; k < n.parents.size(); ++k) {
        if (!wants(k)) continue;
        Tensor& gp = grad_slot(n.parents[k]);
        for (std::size_t j = 0; j < c; ++j) gp[j] += g.at(k, j);
      }
      break;
    }
    case Op::Slice:
      if (wants(0)) {
        Tensor& gx = grad_slot(n.parents[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gx[n.index + i] += g[i];
      }
      break;
    case Op::Lookup:
      if (wants(0)) {
        Tensor& gt = grad_slot(n.parents[0]);
        const std::size_t c = gt.cols();
        for (std::size_t j = 0; j < c; ++j) gt.at(n.index, j) += g[j];
      }
      break;
    case Op::Pick:
      if (wants(0)) grad_slot(n.parents[0])[n.index] += g[0];
      break;
    case Op::Softmax:
      if (wants(0)) {
        Real inner = 0;
        for (std::size_t i = 0; i < g.size(); ++i) inner += g[i] * y[i];
        Tensor& gx = grad_slot(n.parents[0]);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += y[i] * (g[i] - inner) / n.arg;
      }
      break;
  }
}

}  // namespace summ
