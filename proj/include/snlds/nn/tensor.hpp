// SPDX-License-Identifier: Apache-2.0
//
// Tape-based reverse-mode automatic differentiation over dense 2-D arrays.
//
// Every value on the tape is a row-major matrix. Row vectors (1 x n) stand in
// for plain vectors, and batched quantities use one row per sequence, so a
// single recorded operation covers a whole minibatch.
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace snlds::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;

/// Raised when network or tensor dimensions do not line up.
class ConfigurationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for API misuse (non-scalar backward roots, foreign tensors, ...).
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a computation meets NaN or infinite inputs it cannot handle.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A named learnable array together with its gradient accumulator.
///
/// The gradient always has the same shape as the value; `zero_grad` resets it.
class Parameter {
 public:
  Parameter() = default;
  Parameter(std::string name, Matrix value);

  const std::string& name() const { return name_; }
  const Matrix& value() const { return value_; }
  Matrix& value() { return value_; }
  const Matrix& grad() const { return grad_; }
  Matrix& grad() { return grad_; }

  std::vector<std::size_t> shape() const {
    return {static_cast<std::size_t>(value_.rows()), static_cast<std::size_t>(value_.cols())};
  }
  std::size_t size() const { return static_cast<std::size_t>(value_.size()); }
  void zero_grad() { grad_.setZero(value_.rows(), value_.cols()); }

 private:
  std::string name_;
  Matrix value_;
  Matrix grad_;
};

class Graph;

/// Handle to a value recorded on a Graph. Cheap to copy.
class Tensor {
 public:
  Tensor() = default;

  Graph& graph() const;
  bool valid() const { return graph_ != nullptr; }
  int id() const { return id_; }

  const Matrix& value() const;
  /// Gradient of the last backward root with respect to this value.
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  /// Value of a 1 x 1 tensor.
  double item() const;

 private:
  friend class Graph;
  Tensor(Graph* graph, int id) : graph_(graph), id_(id) {}

  Graph* graph_ = nullptr;
  int id_ = -1;
};

/// Records operations and replays them backwards.
///
/// A Graph is single-use per evaluation: build the forward pass, call
/// `backward` on a scalar root, read gradients, then `clear` before reuse.
/// Parameters are bound lazily; the first `param(p)` for a given Parameter
/// creates a leaf, later calls return the same leaf.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor constant(Matrix value);
  Tensor constant(double value);
  /// Leaf whose gradient is kept on the tape (read it via Tensor::grad).
  Tensor variable(Matrix value);
  /// Leaf bound to a Parameter; backward accumulates into Parameter::grad.
  Tensor param(Parameter& p);

  /// Reverse sweep from a 1 x 1 root. Parameter gradients accumulate.
  void backward(const Tensor& root);

  void clear();
  std::size_t size() const { return nodes_.size(); }

  // Building blocks for operations ----------------------------------------

  /// Appends a computed node. `backward` may be empty for non-differentiable
  /// results; the node requires grad iff any parent does.
  Tensor record(Matrix value, std::initializer_list<Tensor> parents, BackwardFn backward);
  Tensor record(Matrix value, const std::vector<Tensor>& parents, BackwardFn backward);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Matrix& grad(int id) const;
  bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  /// Gradient buffer of the node currently being replayed.
  const Matrix& upstream(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  /// Adds `g` into the gradient of node `id` if it requires one.
  template <typename Expr>
  void accumulate(int id, const Expr& g) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }
  int parent(int id, int which) const {
    return nodes_[static_cast<std::size_t>(id)].parents[static_cast<std::size_t>(which)];
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<int> parents;
    BackwardFn backward;
    Parameter* bound = nullptr;
    bool requires_grad = false;
  };

  Tensor push(Node node);
  Tensor record_impl(Matrix value, const Tensor* parents, std::size_t count, BackwardFn backward);

  std::vector<Node> nodes_;
  std::vector<std::pair<const Parameter*, int>> bound_params_;
  Matrix empty_;
};

// Elementwise and linear-algebra operations ---------------------------------
//
// Binary elementwise operations accept equal shapes, or a 1-row operand that
// is broadcast over the rows of the other.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor neg(const Tensor& a);
/// a (r x n) times b (n x m).
Tensor matmul(const Tensor& a, const Tensor& b);
/// x * w + b with b a 1-row bias.
Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
/// One GRU update, gates packed [reset, update, candidate] along columns:
///   r = σ(a_r), u = σ(a_u), n = tanh(x w_n + b_n + r ⊙ (h v_n + c_n)),
///   h' = (1 - u) ⊙ h + u ⊙ n
/// where a = x w + b + h v + c. Shapes: x r x I, h r x H, w I x 3H, v H x 3H,
/// b and c 1 x 3H.
Tensor gru_cell(const Tensor& x, const Tensor& h, const Tensor& w, const Tensor& v,
                const Tensor& b, const Tensor& c);
/// Multiplies every column of `a` (r x n) by the column vector `c` (r x 1).
Tensor mul_col(const Tensor& a, const Tensor& c);
/// Adds the column vector `c` (r x 1) to every column of `a`.
Tensor add_col(const Tensor& a, const Tensor& c);

Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor square(const Tensor& a);
/// max(a, floor) elementwise; gradient is zero where the floor is active.
Tensor clamp_min(const Tensor& a, double floor);

/// Sum of all entries, 1 x 1.
Tensor sum(const Tensor& a);
/// Per-row sum, r x 1.
Tensor row_sum(const Tensor& a);
/// Sum over rows, 1 x n.
Tensor col_sum(const Tensor& a);
/// Sum of a ⊙ w over all entries for a constant weight array, 1 x 1.
/// `w` may have one row, in which case it is broadcast.
Tensor weighted_sum(const Tensor& a, const Matrix& w);

Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, Eigen::Index begin, Eigen::Index count);
Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count);
/// Row-major reshape; the entry order is unchanged.
Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols);
/// Repeats a 1-row tensor `rows` times.
Tensor broadcast_rows(const Tensor& a, Eigen::Index rows);

/// Row-wise log-softmax.
Tensor log_softmax_rows(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
/// Row-wise log-sum-exp, r x 1.
Tensor logsumexp_rows(const Tensor& a);

/// Diagonal Gaussian log-density summed over columns, r x 1.
///
/// `mean` and `log_scale` may be single rows broadcast over the rows of `x`.
Tensor gaussian_log_prob(const Tensor& x, const Tensor& mean, const Tensor& log_scale);
/// Diagonal Gaussian entropy summed over columns, r x 1 (or 1 x 1).
Tensor gaussian_entropy(const Tensor& log_scale);

/// Log-space vector-matrix product over K states, batched by row.
///
/// `alpha` is r x K and `log_a` is r x K² (or 1 x K², broadcast) holding
/// a row-major K x K matrix per row. Returns
///   out[b][k] = log Σ_j exp(alpha[b][j] + log_a[b][j*K + k]).
Tensor log_vecmat(const Tensor& alpha, const Tensor& log_a);
/// Log-space matrix-vector product: out[b][j] = log Σ_k exp(log_a[b][j*K+k] + beta[b][k]).
Tensor log_matvec(const Tensor& log_a, const Tensor& beta);
/// Per-row bilinear form Σ_{j,k} u[b][j] m[b][j*K+k] v[b][k], r x 1.
Tensor bilinear_rows(const Tensor& u, const Tensor& m, const Tensor& v);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator-(const Tensor& a) { return neg(a); }

/// Closed-form helpers on plain vectors (no tape).
double gaussian_log_prob(const RowVector& x, const RowVector& mean, const RowVector& log_scale);
double gaussian_entropy(const RowVector& log_scale);

}  // namespace snlds::nn
