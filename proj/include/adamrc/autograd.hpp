#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Graph records one forward computation (typically one training example);
// calling backward() on a scalar node pushes gradients into every reachable
// node and accumulates them into the bound Parameters. Parameters store their
// values in single precision (the checkpoint format) while all graph arithmetic
// runs in double precision.

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "adamrc/rng.hpp"

namespace adamrc::ag {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using FMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

struct Parameter {
  std::string name;
  FMatrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)), value(FMatrix::Zero(rows, cols)), grad(Matrix::Zero(rows, cols)) {}

  Eigen::Index rows() const { return value.rows(); }
  Eigen::Index cols() const { return value.cols(); }
  Eigen::Index size() const { return value.size(); }
  void zero_grad() {
    if (grad.rows() != value.rows() || grad.cols() != value.cols())
      grad = Matrix::Zero(value.rows(), value.cols());
    else
      grad.setZero();
  }
};

// Glorot-uniform initialisation.
void init_glorot(Parameter& p, Rng& rng);
void init_uniform(Parameter& p, Rng& rng, double bound);

class Graph;

struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Matrix& value() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }
};

class Graph {
 public:
  // Called with the node's own id and its accumulated gradient.
  using Backward = std::function<void(Graph&, int self, const Matrix& out_grad)>;

  explicit Graph(bool requires_grad = true) : requires_grad_(requires_grad) { nodes_.reserve(256); }
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool requires_grad() const { return requires_grad_; }

  // Leaf bound to a parameter; repeated calls in one graph return the same node.
  Var param(Parameter& p);
  Var constant(Matrix m);
  // Rows of an embedding table; the backward pass scatters into table.grad.
  Var lookup(Parameter& table, std::span<const int> ids);

  // Seeds d(out)/d(out) = seed on a 1x1 node and runs the reverse sweep.
  void backward(Var out, double seed = 1.0);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  // Gradient reaching a node after backward(); zero-sized if none reached it.
  const Matrix& grad(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].grad; }
  std::size_t size() const { return nodes_.size(); }

  // Operator plumbing.
  Var push(Matrix value, Backward backward = {});
  Matrix& grad_buffer(int id);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backward backward;
  };
  bool requires_grad_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

inline const Matrix& Var::value() const { return graph->value(id); }

// Elementwise and linear-algebra operators.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
// Adds a 1xN row vector to every row of a.
Var add_row(Var a, Var row);
// Multiplies every row of a (R x N) elementwise by the R x 1 column.
Var mul_col(Var a, Var col);
Var one_minus(Var a);
Var sigmoid(Var a);
Var tanh(Var a);
Var log(Var a);
Var transpose(Var a);
Var hcat(std::span<const Var> parts);
Var vcat(std::span<const Var> parts);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var sum(Var a);
Var mean_rows(Var a);
Var pick(Var a, Eigen::Index row, Eigen::Index col);

// Row-wise softmax. Columns at or beyond valid_cols receive probability zero,
// equivalent to masking their scores with -inf.
Var softmax_rows(Var a, Eigen::Index valid_cols = -1);

// Identity forward; multiplies the incoming gradient by -lambda.
Var grad_reverse(Var a, double lambda);

// Inverted dropout; identity when rate == 0.
Var dropout(Var a, double rate, Rng& rng);

// Full-sequence LSTM (gate order i, f, g, o). x: T x in, wx: in x 4h,
// wh: h x 4h, b: 1 x 4h. Returns T x h states in input order; reverse runs
// right-to-left. Optional h0/c0 (1 x h) initial state.
Var lstm(Var x, Var wx, Var wh, Var b, bool reverse, Var h0 = {}, Var c0 = {});

// Additive attention scores: out(t, i) = sum_k v(k) * tanh(keys(i, k) + queries(t, k)).
// keys: T x a, queries: T' x a, v: 1 x a. Returns T' x T.
Var additive_scores(Var keys, Var queries, Var v);

// Probability of each target under the gated vocabulary/copy mixture:
// out(t) = g(t) * pv(t, y_t) [y_t < V] + (1 - g(t)) * sum_i alpha(t, i) [src_i == y_t].
// pv: T' x V, gate: T' x 1, alpha: T' x T, src_ids: extended ids of the T source
// positions, targets: T' extended ids. Returns T' x 1.
Var pointer_mixture_pick(Var pv, Var gate, Var alpha, std::span<const int> src_ids,
                         std::span<const int> targets);

// Binary cross-entropy on a 1x1 logit: softplus(z) - label * z.
Var bce_with_logits(Var logit, double label);

}  // namespace adamrc::ag
