#pragma once

// Tape-based reverse-mode differentiation over dense rank <= 2 tensors.
//
// A Graph records every primitive applied to its variables in topological
// order. Leaves are either parameters (differentiated) or constants. Binary
// elementwise primitives broadcast an extent of 1 against any extent in each
// of the two dimensions; nothing more general is supported.
//
//   ad::Graph g;
//   auto w = g.parameter(Tensor::row({1.0, 2.0}));
//   auto loss = ad::sum(w * w);
//   auto grads = g.backward(loss, {{w}});   // grads[w] == [2, 4]

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "metaclust/tensor.hpp"

namespace metaclust::ad {

enum class Op : std::uint8_t {
  Parameter,
  Constant,
  MatMul,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Exp,
  Log,
  Abs,
  Relu,
  Digamma,
  Lgamma,
  Sum,
  Mean,
  LogSumExp,
  SqDist,
  PairwiseL1,
  ConcatCols,
  Transpose,
};
inline constexpr std::size_t kOpCount = static_cast<std::size_t>(Op::Transpose) + 1;

std::string_view op_name(Op op);

// Reduction axis. Rows collapses the row dimension (result 1 x C), Cols
// collapses the column dimension (result R x 1), All yields a scalar.
enum class Axis : std::int8_t { All = -1, Rows = 0, Cols = 1 };

class Graph;

// Handle to a recorded value. Cheap to copy; valid while its Graph lives.
class Var {
 public:
  Var() = default;

  Graph* graph() const noexcept { return graph_; }
  int id() const noexcept { return id_; }
  bool valid() const noexcept { return graph_ != nullptr; }

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Graph;
  Var(Graph* g, int id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Gradients keyed by the variable they belong to.
class GradientMap {
 public:
  const Tensor& operator[](Var v) const;
  bool contains(Var v) const { return grads_.contains(v.id()); }
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend class Graph;
  std::unordered_map<int, Tensor> grads_;
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var parameter(Tensor value);
  Var constant(Tensor value);
  Var constant(double value) { return constant(Tensor::scalar(value)); }

  // Records one primitive. `axis` applies to reductions; the transpose flags
  // to MatMul only.
  Var apply(Op op, Var a, Var b = {}, Axis axis = Axis::All, bool trans_a = false,
            bool trans_b = false);

  const Tensor& value(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id())).value; }
  std::size_t size() const noexcept { return nodes_.size(); }
  Op op_at(std::size_t i) const { return nodes_.at(i).op; }

  // Exact gradient of a one-element `loss` with respect to each target.
  // Targets the loss does not depend on receive zero tensors.
  GradientMap backward(Var loss, std::span<const Var> targets) const;
  GradientMap backward(Var loss, std::initializer_list<Var> targets) const {
    return backward(loss, std::span<const Var>(targets.begin(), targets.size()));
  }

  // Re-evaluates every recorded entry from its inputs and compares with the
  // stored outputs bit for bit.
  bool replay_matches() const;

 private:
  struct Node {
    Op op = Op::Constant;
    int in0 = -1;
    int in1 = -1;
    Axis axis = Axis::All;
    bool trans_a = false;
    bool trans_b = false;
    bool tracks = false;  // some parameter reaches this node
    Tensor value;
  };

  Tensor forward(const Node& node) const;
  void accumulate(const Node& node, const Tensor& adjoint, std::vector<Tensor>& adj,
                  std::vector<char>& has) const;

  std::vector<Node> nodes_;
};

Var matmul(Var a, Var b, bool trans_a = false, bool trans_b = false);

Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator/(Var a, double c);
Var operator/(double c, Var a);

Var exp(Var x);
Var log(Var x);
Var abs(Var x);
Var relu(Var x);
Var digamma(Var x);
Var lgamma(Var x);
inline Var square(Var x) { return x * x; }

Var sum(Var x, Axis axis = Axis::All);
Var mean(Var x, Axis axis = Axis::All);
Var logsumexp(Var x, Axis axis);

// out(n, k) = ||a_n - b_k||^2 for a: N x S, b: K x S.
Var sqdist(Var a, Var b);
// out(i, j) = sum_c |a_ic - a_jc| for a: N x C.
Var pairwise_l1(Var a);
Var concat_cols(Var a, Var b);
Var transpose(Var a);

// Row-wise log of the softmax, via log-sum-exp.
inline Var log_softmax_rows(Var logits) { return logits - logsumexp(logits, Axis::Cols); }

namespace testing {
// Multiplies the derivative rule of `op` by `scale` in every graph of the
// process. Negative control for gradient checks; reset with scale 1.
void set_derivative_fault(Op op, double scale);
void clear_derivative_faults();
}  // namespace testing

}  // namespace metaclust::ad
