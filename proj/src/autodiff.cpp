#include "metaclust/autodiff.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <bit>
#include <cmath>
#include <limits>
#include <string>

#include "metaclust/error.hpp"
#include "metaclust/kernels.hpp"
#include "metaclust/special.hpp"

namespace metaclust::ad {
namespace {

std::array<std::atomic<double>, kOpCount>& fault_scales() {
  static std::array<std::atomic<double>, kOpCount> scales;
  static const bool init = [] {
    for (auto& v : scales) v.store(1.0);
    return true;
  }();
  (void)init;
  return scales;
}

double fault_scale(Op op) {
  return fault_scales()[static_cast<std::size_t>(op)].load(std::memory_order_relaxed);
}

std::size_t broadcast_extent(std::size_t x, std::size_t y, Op op) {
  if (x == y) return x;
  if (x == 1) return y;
  if (y == 1) return x;
  throw ShapeError(std::string(op_name(op)) + ": extents " + std::to_string(x) + " and " +
                   std::to_string(y) + " do not broadcast");
}

// Elementwise binary map with size-1 broadcasting.
template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, Op op, F f) {
  const std::size_t r = broadcast_extent(a.rows(), b.rows(), op);
  const std::size_t c = broadcast_extent(a.cols(), b.cols(), op);
  Tensor out(r, c);
  const bool ar = a.rows() == 1, ac = a.cols() == 1, br = b.rows() == 1, bc = b.cols() == 1;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j)
      out(i, j) = f(a(ar ? 0 : i, ac ? 0 : j), b(br ? 0 : i, bc ? 0 : j));
  return out;
}

template <typename F>
Tensor map(const Tensor& x, F f) {
  Tensor out = x;
  for (double& v : out.values()) v = f(v);
  return out;
}

// Sums `g` down to the extents of `target` (undoes broadcasting).
Tensor reduce_to(const Tensor& g, const Tensor& target) {
  if (g.rows() == target.rows() && g.cols() == target.cols()) {
    Tensor out = target;
    std::copy(g.values().begin(), g.values().end(), out.values().begin());
    return out;
  }
  Tensor out = target;
  out.fill(0.0);
  const bool rr = target.rows() == 1, rc = target.cols() == 1;
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) out(rr ? 0 : i, rc ? 0 : j) += g(i, j);
  return out;
}

void check_finite(const Tensor& t, Op op) {
  if (!t.all_finite())
    throw NumericalError(std::string(op_name(op)) + ": produced a non-finite value");
}

Tensor reduce_sum(const Tensor& x, Axis axis) {
  const std::size_t r = x.rows(), c = x.cols();
  switch (axis) {
    case Axis::All: {
      double acc = 0.0;
      for (double v : x.values()) acc += v;
      return Tensor::scalar(acc);
    }
    case Axis::Rows: {
      Tensor out(1, c);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out(0, j) += x(i, j);
      return out;
    }
    case Axis::Cols: {
      Tensor out(r, 1);
      for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += x(i, j);
        out(i, 0) = acc;
      }
      return out;
    }
  }
  return {};
}

std::size_t reduced_count(const Tensor& x, Axis axis) {
  switch (axis) {
    case Axis::All: return x.size();
    case Axis::Rows: return x.rows();
    case Axis::Cols: return x.cols();
  }
  return 1;
}

Tensor reduce_logsumexp(const Tensor& x, Axis axis) {
  const std::size_t r = x.rows(), c = x.cols();
  auto lse = [](auto&& get, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) m = std::max(m, get(t));
    double acc = 0.0;
    for (std::size_t t = 0; t < n; ++t) acc += std::exp(get(t) - m);
    return m + std::log(acc);
  };
  switch (axis) {
    case Axis::All:
      return Tensor::scalar(lse([&](std::size_t t) { return x[t]; }, x.size()));
    case Axis::Rows: {
      Tensor out(1, c);
      for (std::size_t j = 0; j < c; ++j) out(0, j) = lse([&](std::size_t t) { return x(t, j); }, r);
      return out;
    }
    case Axis::Cols: {
      Tensor out(r, 1);
      for (std::size_t i = 0; i < r; ++i) out(i, 0) = lse([&](std::size_t t) { return x(i, t); }, c);
      return out;
    }
  }
  return {};
}

Tensor gemm(const Tensor& a, const Tensor& b, bool ta, bool tb) {
  kernels::GemmShape s;
  s.m = ta ? a.cols() : a.rows();
  s.k = ta ? a.rows() : a.cols();
  const std::size_t kb = tb ? b.cols() : b.rows();
  s.n = tb ? b.rows() : b.cols();
  s.trans_a = ta;
  s.trans_b = tb;
  if (s.k != kb)
    throw ShapeError("matmul: inner extents differ (" + a.shape_string() + (ta ? "^T" : "") +
                     " * " + b.shape_string() + (tb ? "^T" : "") + ")");
  Tensor out(s.m, s.n);
  kernels::omp::gemm(s, a.values(), b.values(), out.values());
  return out;
}

Tensor transposed(const Tensor& x) {
  Tensor out(x.cols(), x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) out(j, i) = x(i, j);
  return out;
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::Parameter: return "parameter";
    case Op::Constant: return "constant";
    case Op::MatMul: return "matmul";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Abs: return "abs";
    case Op::Relu: return "relu";
    case Op::Digamma: return "digamma";
    case Op::Lgamma: return "lgamma";
    case Op::Sum: return "sum";
    case Op::Mean: return "mean";
    case Op::LogSumExp: return "logsumexp";
    case Op::SqDist: return "sqdist";
    case Op::PairwiseL1: return "pairwise_l1";
    case Op::ConcatCols: return "concat_cols";
    case Op::Transpose: return "transpose";
  }
  return "unknown";
}

const Tensor& Var::value() const {
  if (!graph_) throw ContractError("value() on an unbound variable");
  return graph_->value(*this);
}

const Tensor& GradientMap::operator[](Var v) const {
  auto it = grads_.find(v.id());
  if (it == grads_.end()) throw ContractError("no gradient recorded for variable");
  return it->second;
}

Var Graph::parameter(Tensor value) {
  Node n;
  n.op = Op::Parameter;
  n.tracks = true;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Graph::constant(Tensor value) {
  Node n;
  n.op = Op::Constant;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Tensor Graph::forward(const Node& n) const {
  if (n.op == Op::Parameter || n.op == Op::Constant) return n.value;
  const Tensor& a = nodes_[static_cast<std::size_t>(n.in0)].value;
  static const Tensor kNone;
  const Tensor& b = n.in1 >= 0 ? nodes_[static_cast<std::size_t>(n.in1)].value : kNone;
  switch (n.op) {
    case Op::Parameter:
    case Op::Constant: return n.value;
    case Op::MatMul: return gemm(a, b, n.trans_a, n.trans_b);
    case Op::Add: return zip(a, b, n.op, [](double x, double y) { return x + y; });
    case Op::Sub: return zip(a, b, n.op, [](double x, double y) { return x - y; });
    case Op::Mul: return zip(a, b, n.op, [](double x, double y) { return x * y; });
    case Op::Div:
      return zip(a, b, n.op, [](double x, double y) {
        if (y == 0.0) throw DomainError("div: division by zero");
        return x / y;
      });
    case Op::Neg: return map(a, [](double x) { return -x; });
    case Op::Exp: return map(a, [](double x) { return std::exp(x); });
    case Op::Log:
      return map(a, [](double x) {
        if (!(x > 0.0)) throw DomainError("log: non-positive argument " + std::to_string(x));
        return std::log(x);
      });
    case Op::Abs: return map(a, [](double x) { return std::fabs(x); });
    case Op::Relu: return map(a, [](double x) { return x > 0.0 ? x : 0.0; });
    case Op::Digamma: return map(a, [](double x) { return special::digamma(x); });
    case Op::Lgamma:
      return map(a, [](double x) {
        if (!(x > 0.0)) throw DomainError("lgamma: non-positive argument " + std::to_string(x));
        return std::lgamma(x);
      });
    case Op::Sum: return reduce_sum(a, n.axis);
    case Op::Mean: {
      Tensor out = reduce_sum(a, n.axis);
      const double count = static_cast<double>(reduced_count(a, n.axis));
      for (double& v : out.values()) v /= count;
      return out;
    }
    case Op::LogSumExp: return reduce_logsumexp(a, n.axis);
    case Op::SqDist: {
      if (a.cols() != b.cols())
        throw ShapeError("sqdist: feature extents differ " + a.shape_string() + " vs " +
                         b.shape_string());
      Tensor out(a.rows(), b.rows());
      kernels::omp::row_sqdist(a.rows(), b.rows(), a.cols(), a.values(), b.values(), out.values());
      return out;
    }
    case Op::PairwiseL1: {
      Tensor out(a.rows(), a.rows());
      kernels::omp::pairwise_l1(a.rows(), a.cols(), a.values(), out.values());
      return out;
    }
    case Op::ConcatCols: {
      if (a.rows() != b.rows())
        throw ShapeError("concat_cols: row extents differ " + a.shape_string() + " vs " +
                         b.shape_string());
      Tensor out(a.rows(), a.cols() + b.cols());
      for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
        for (std::size_t j = 0; j < b.cols(); ++j) out(i, a.cols() + j) = b(i, j);
      }
      return out;
    }
    case Op::Transpose: return transposed(a);
  }
  throw ContractError("unknown primitive");
}

Var Graph::apply(Op op, Var a, Var b, Axis axis, bool trans_a, bool trans_b) {
  if (a.graph() != this || (b.valid() && b.graph() != this))
    throw ContractError(std::string(op_name(op)) + ": operand from another graph");
  Node n;
  n.op = op;
  n.in0 = a.id();
  n.in1 = b.valid() ? b.id() : -1;
  n.axis = axis;
  n.trans_a = trans_a;
  n.trans_b = trans_b;
  n.tracks = nodes_[static_cast<std::size_t>(n.in0)].tracks ||
             (n.in1 >= 0 && nodes_[static_cast<std::size_t>(n.in1)].tracks);
  n.value = forward(n);
  check_finite(n.value, op);
  nodes_.push_back(std::move(n));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

bool Graph::replay_matches() const {
  for (const Node& n : nodes_) {
    if (n.op == Op::Parameter || n.op == Op::Constant) continue;
    const Tensor again = forward(n);
    if (again.shape() != n.value.shape()) return false;
    for (std::size_t i = 0; i < again.size(); ++i)
      if (std::bit_cast<std::uint64_t>(again[i]) != std::bit_cast<std::uint64_t>(n.value[i]))
        return false;
  }
  return true;
}

void Graph::accumulate(const Node& n, const Tensor& g, std::vector<Tensor>& adj,
                       std::vector<char>& has) const {
  const double fault = fault_scale(n.op);
  auto push = [&](int id, Tensor contribution) {
    const auto idx = static_cast<std::size_t>(id);
    if (!nodes_[idx].tracks) return;
    if (fault != 1.0)
      for (double& v : contribution.values()) v *= fault;
    if (!has[idx]) {
      adj[idx] = std::move(contribution);
      has[idx] = 1;
    } else {
      auto dst = adj[idx].values();
      auto src = contribution.values();
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    }
  };
  auto tracks = [&](int id) { return id >= 0 && nodes_[static_cast<std::size_t>(id)].tracks; };

  const Tensor& a = nodes_[static_cast<std::size_t>(n.in0)].value;
  static const Tensor kNone;
  const Tensor& b = n.in1 >= 0 ? nodes_[static_cast<std::size_t>(n.in1)].value : kNone;
  const Tensor& y = n.value;

  switch (n.op) {
    case Op::Parameter:
    case Op::Constant: return;
    case Op::MatMul: {
      // C = A' B' with A' = op(A), B' = op(B); dA' = G B'^T, dB' = A'^T G.
      if (tracks(n.in0))
        push(n.in0, n.trans_a ? gemm(b, g, n.trans_b, true) : gemm(g, b, false, !n.trans_b));
      if (tracks(n.in1))
        push(n.in1, n.trans_b ? gemm(g, a, true, n.trans_a) : gemm(a, g, !n.trans_a, false));
      return;
    }
    case Op::Add:
      if (tracks(n.in0)) push(n.in0, reduce_to(g, a));
      if (tracks(n.in1)) push(n.in1, reduce_to(g, b));
      return;
    case Op::Sub:
      if (tracks(n.in0)) push(n.in0, reduce_to(g, a));
      if (tracks(n.in1)) push(n.in1, reduce_to(map(g, [](double v) { return -v; }), b));
      return;
    case Op::Mul:
      if (tracks(n.in0))
        push(n.in0, reduce_to(zip(g, b, n.op, [](double u, double v) { return u * v; }), a));
      if (tracks(n.in1))
        push(n.in1, reduce_to(zip(g, a, n.op, [](double u, double v) { return u * v; }), b));
      return;
    case Op::Div:
      if (tracks(n.in0))
        push(n.in0, reduce_to(zip(g, b, n.op, [](double u, double v) { return u / v; }), a));
      if (tracks(n.in1)) {
        // d(a/b)/db = -(a/b)/b
        Tensor t = zip(g, y, n.op, [](double u, double v) { return -u * v; });
        push(n.in1, reduce_to(zip(t, b, n.op, [](double u, double v) { return u / v; }), b));
      }
      return;
    case Op::Neg: push(n.in0, map(g, [](double v) { return -v; })); return;
    case Op::Exp: push(n.in0, zip(g, y, n.op, [](double u, double v) { return u * v; })); return;
    case Op::Log: push(n.in0, zip(g, a, n.op, [](double u, double v) { return u / v; })); return;
    case Op::Abs:
      push(n.in0, zip(g, a, n.op, [](double u, double v) {
             return v > 0.0 ? u : (v < 0.0 ? -u : 0.0);
           }));
      return;
    case Op::Relu:
      push(n.in0, zip(g, a, n.op, [](double u, double v) { return v > 0.0 ? u : 0.0; }));
      return;
    case Op::Digamma:
      push(n.in0,
           zip(g, a, n.op, [](double u, double v) { return u * special::trigamma(v); }));
      return;
    case Op::Lgamma:
      push(n.in0, zip(g, a, n.op, [](double u, double v) { return u * special::digamma(v); }));
      return;
    case Op::Sum:
    case Op::Mean: {
      Tensor d = zip(a, g, n.op, [](double, double v) { return v; });
      if (n.op == Op::Mean) {
        const double count = static_cast<double>(reduced_count(a, n.axis));
        for (double& v : d.values()) v /= count;
      }
      push(n.in0, std::move(d));
      return;
    }
    case Op::LogSumExp: {
      Tensor soft = zip(a, y, n.op, [](double x, double m) { return std::exp(x - m); });
      push(n.in0, zip(soft, g, n.op, [](double s, double v) { return s * v; }));
      return;
    }
    case Op::SqDist: {
      // dA = 2 (rowsum(G) * A - G B),  dB = 2 (colsum(G)^T * B - G^T A)
      if (tracks(n.in0)) {
        Tensor gb = gemm(g, b, false, false);
        Tensor rs = reduce_sum(g, Axis::Cols);
        Tensor d(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t j = 0; j < a.cols(); ++j)
            d(i, j) = 2.0 * (rs(i, 0) * a(i, j) - gb(i, j));
        push(n.in0, std::move(d));
      }
      if (tracks(n.in1)) {
        Tensor ga = gemm(g, a, true, false);
        Tensor cs = reduce_sum(g, Axis::Rows);
        Tensor d(b.rows(), b.cols());
        for (std::size_t k = 0; k < b.rows(); ++k)
          for (std::size_t j = 0; j < b.cols(); ++j)
            d(k, j) = 2.0 * (cs(0, k) * b(k, j) - ga(k, j));
        push(n.in1, std::move(d));
      }
      return;
    }
    case Op::PairwiseL1: {
      Tensor d(a.rows(), a.cols());
      kernels::omp::pairwise_l1_backward(a.rows(), a.cols(), a.values(), g.values(), d.values());
      push(n.in0, std::move(d));
      return;
    }
    case Op::ConcatCols: {
      if (tracks(n.in0)) {
        Tensor d(a.rows(), a.cols());
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t j = 0; j < a.cols(); ++j) d(i, j) = g(i, j);
        push(n.in0, std::move(d));
      }
      if (tracks(n.in1)) {
        Tensor d(b.rows(), b.cols());
        for (std::size_t i = 0; i < b.rows(); ++i)
          for (std::size_t j = 0; j < b.cols(); ++j) d(i, j) = g(i, a.cols() + j);
        push(n.in1, std::move(d));
      }
      return;
    }
    case Op::Transpose: {
      Tensor d = transposed(g);
      push(n.in0, reduce_to(d, a));
      return;
    }
  }
}

GradientMap Graph::backward(Var loss, std::span<const Var> targets) const {
  if (loss.graph() != this) throw ContractError("backward: loss from another graph");
  const auto root = static_cast<std::size_t>(loss.id());
  if (nodes_[root].value.size() != 1)
    throw ContractError("backward: loss must be scalar, got shape " +
                        nodes_[root].value.shape_string());

  std::vector<Tensor> adj(root + 1);
  std::vector<char> has(root + 1, 0);
  std::vector<char> keep(root + 1, 0);
  for (const Var& t : targets)
    if (t.graph() == this && static_cast<std::size_t>(t.id()) <= root)
      keep[static_cast<std::size_t>(t.id())] = 1;
  if (nodes_[root].tracks) {
    adj[root] = nodes_[root].value;
    adj[root].fill(1.0);
    has[root] = 1;
  }
  for (std::size_t i = root + 1; i-- > 0;) {
    if (!has[i]) continue;
    const Node& n = nodes_[i];
    if (n.op == Op::Parameter || n.op == Op::Constant) continue;
    accumulate(n, adj[i], adj, has);
    // Interior adjoints are no longer needed once propagated.
    if (!keep[i]) adj[i] = Tensor();
  }

  GradientMap out;
  for (const Var& t : targets) {
    if (t.graph() != this) throw ContractError("backward: target from another graph");
    const auto idx = static_cast<std::size_t>(t.id());
    Tensor grad = nodes_[idx].value;
    if (idx <= root && has[idx])
      grad = adj[idx];
    else
      grad.fill(0.0);
    out.grads_.insert_or_assign(t.id(), std::move(grad));
  }
  return out;
}

// ---------------------------------------------------------------------------

Var matmul(Var a, Var b, bool trans_a, bool trans_b) {
  return a.graph()->apply(Op::MatMul, a, b, Axis::All, trans_a, trans_b);
}

Var operator+(Var a, Var b) { return a.graph()->apply(Op::Add, a, b); }
Var operator-(Var a, Var b) { return a.graph()->apply(Op::Sub, a, b); }
Var operator*(Var a, Var b) { return a.graph()->apply(Op::Mul, a, b); }
Var operator/(Var a, Var b) { return a.graph()->apply(Op::Div, a, b); }
Var operator-(Var a) { return a.graph()->apply(Op::Neg, a); }
Var operator+(Var a, double c) { return a + a.graph()->constant(c); }
Var operator+(double c, Var a) { return a.graph()->constant(c) + a; }
Var operator-(Var a, double c) { return a - a.graph()->constant(c); }
Var operator-(double c, Var a) { return a.graph()->constant(c) - a; }
Var operator*(Var a, double c) { return a * a.graph()->constant(c); }
Var operator*(double c, Var a) { return a.graph()->constant(c) * a; }
Var operator/(Var a, double c) { return a / a.graph()->constant(c); }
Var operator/(double c, Var a) { return a.graph()->constant(c) / a; }

Var exp(Var x) { return x.graph()->apply(Op::Exp, x); }
Var log(Var x) { return x.graph()->apply(Op::Log, x); }
Var abs(Var x) { return x.graph()->apply(Op::Abs, x); }
Var relu(Var x) { return x.graph()->apply(Op::Relu, x); }
Var digamma(Var x) { return x.graph()->apply(Op::Digamma, x); }
Var lgamma(Var x) { return x.graph()->apply(Op::Lgamma, x); }
Var sum(Var x, Axis axis) { return x.graph()->apply(Op::Sum, x, {}, axis); }
Var mean(Var x, Axis axis) { return x.graph()->apply(Op::Mean, x, {}, axis); }
Var logsumexp(Var x, Axis axis) { return x.graph()->apply(Op::LogSumExp, x, {}, axis); }
Var sqdist(Var a, Var b) { return a.graph()->apply(Op::SqDist, a, b); }
Var pairwise_l1(Var a) { return a.graph()->apply(Op::PairwiseL1, a); }
Var concat_cols(Var a, Var b) { return a.graph()->apply(Op::ConcatCols, a, b); }
Var transpose(Var a) { return a.graph()->apply(Op::Transpose, a); }

namespace testing {

void set_derivative_fault(Op op, double scale) {
  fault_scales()[static_cast<std::size_t>(op)].store(scale);
}

void clear_derivative_faults() {
  for (auto& s : fault_scales()) s.store(1.0);
}

}  // namespace testing

}  // namespace metaclust::ad
