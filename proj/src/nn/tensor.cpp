// SPDX-License-Identifier: Apache-2.0
#include "snlds/nn/tensor.hpp"

#include <cmath>
#include <limits>
#include <span>
#include <sstream>

namespace snlds::nn {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;  // log(2π)

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void check_same_graph(const Tensor& a, const Tensor& b) {
  if (!a.valid() || !b.valid() || &a.graph() != &b.graph()) {
    throw UsageError("tensors belong to different graphs");
  }
}

// Shape rule for broadcasting binary operations.
enum class Bcast { none, rhs, lhs };

Bcast broadcast_kind(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Bcast::none;
  if (a.cols() == b.cols() && b.rows() == 1) return Bcast::rhs;
  if (a.cols() == b.cols() && a.rows() == 1) return Bcast::lhs;
  throw ConfigurationError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                           shape_str(b));
}

// Reduces an upstream gradient to the shape of a broadcast operand.
template <typename Expr>
void accumulate_reduced(Graph& g, int id, const Expr& grad, bool was_broadcast) {
  if (!g.requires_grad(id)) return;
  if (was_broadcast) {
    Matrix reduced = grad.colwise().sum();
    g.accumulate(id, reduced);
  } else {
    g.accumulate(id, grad);
  }
}

Matrix broadcast_to(const Matrix& m, Eigen::Index rows) {
  if (m.rows() == rows) return m;
  return m.replicate(rows, 1);
}

}  // namespace

// Parameter ---------------------------------------------------------------

Parameter::Parameter(std::string name, Matrix value)
    : name_(std::move(name)), value_(std::move(value)) {
  zero_grad();
}

// Tensor -----------------------------------------------------------------

Graph& Tensor::graph() const {
  if (graph_ == nullptr) throw UsageError("use of an unbound tensor");
  return *graph_;
}

const Matrix& Tensor::value() const { return graph().value(id_); }

const Matrix& Tensor::grad() const { return graph().grad(id_); }

double Tensor::item() const {
  const Matrix& v = value();
  if (v.size() != 1) throw UsageError("item() on a " + shape_str(v) + " tensor");
  return v(0, 0);
}

// Graph ------------------------------------------------------------------

Tensor Graph::push(Node node) {
  if (nodes_.capacity() == 0) nodes_.reserve(4096);
  nodes_.push_back(std::move(node));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Graph::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  return push(std::move(n));
}

Tensor Graph::constant(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

Tensor Graph::variable(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = true;
  return push(std::move(n));
}

Tensor Graph::param(Parameter& p) {
  for (const auto& [ptr, id] : bound_params_) {
    if (ptr == &p) return Tensor(this, id);
  }
  Node n;
  n.value = p.value();
  n.requires_grad = true;
  n.bound = &p;
  Tensor t = push(std::move(n));
  bound_params_.emplace_back(&p, t.id());
  return t;
}

Tensor Graph::record(Matrix value, std::initializer_list<Tensor> parents, BackwardFn backward) {
  return record_impl(std::move(value), parents.begin(), parents.size(), std::move(backward));
}

Tensor Graph::record(Matrix value, const std::vector<Tensor>& parents, BackwardFn backward) {
  return record_impl(std::move(value), parents.data(), parents.size(), std::move(backward));
}

Tensor Graph::record_impl(Matrix value, const Tensor* parents, std::size_t count,
                          BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.parents.reserve(count);
  for (const Tensor& p : std::span(parents, count)) {
    if (&p.graph() != this) throw UsageError("tensor recorded on a different graph");
    n.parents.push_back(p.id());
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(p.id())].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  return push(std::move(n));
}

const Matrix& Graph::grad(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.grad.size() == 0 ? empty_ : n.grad;
}

void Graph::backward(const Tensor& root) {
  if (&root.graph() != this) throw UsageError("backward root belongs to another graph");
  const Matrix& rv = value(root.id());
  if (rv.size() != 1) throw UsageError("backward root must be scalar, got " + shape_str(rv));
  for (auto& n : nodes_) n.grad.resize(0, 0);
  Node& r = nodes_[static_cast<std::size_t>(root.id())];
  if (!r.requires_grad) return;
  r.grad = Matrix::Ones(1, 1);
  for (int i = root.id(); i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() == 0) continue;
    if (n.backward) n.backward(*this, i);
    if (n.bound != nullptr) {
      Matrix& pg = n.bound->grad();
      if (pg.rows() != n.grad.rows() || pg.cols() != n.grad.cols()) {
        pg.setZero(n.grad.rows(), n.grad.cols());
      }
      pg += n.grad;
    }
  }
}

void Graph::clear() {
  nodes_.clear();
  bound_params_.clear();
}

// Elementwise binary ------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_graph(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Bcast k = broadcast_kind(av, bv, "add");
  Matrix out;
  if (k == Bcast::none) out = av + bv;
  else if (k == Bcast::rhs) out = av.rowwise() + bv.row(0);
  else out = bv.rowwise() + av.row(0);
  int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib, k](Graph& g, int self) {
    const Matrix& up = g.upstream(self);
    accumulate_reduced(g, ia, up, k == Bcast::lhs);
    accumulate_reduced(g, ib, up, k == Bcast::rhs);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_graph(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Bcast k = broadcast_kind(av, bv, "sub");
  Matrix out;
  if (k == Bcast::none) out = av - bv;
  else if (k == Bcast::rhs) out = av.rowwise() - bv.row(0);
  else out = (-bv).rowwise() + av.row(0);
  int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib, k](Graph& g, int self) {
    const Matrix& up = g.upstream(self);
    accumulate_reduced(g, ia, up, k == Bcast::lhs);
    if (g.requires_grad(ib)) {
      Matrix n = -up;
      accumulate_reduced(g, ib, n, k == Bcast::rhs);
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_graph(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Bcast k = broadcast_kind(av, bv, "mul");
  const Eigen::Index rows = std::max(av.rows(), bv.rows());
  Matrix out = broadcast_to(av, rows).cwiseProduct(broadcast_to(bv, rows));
  int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib, k, rows](Graph& g, int self) {
    const Matrix& up = g.upstream(self);
    if (g.requires_grad(ia)) {
      Matrix ga = up.cwiseProduct(broadcast_to(g.value(ib), rows));
      accumulate_reduced(g, ia, ga, k == Bcast::lhs);
    }
    if (g.requires_grad(ib)) {
      Matrix gb = up.cwiseProduct(broadcast_to(g.value(ia), rows));
      accumulate_reduced(g, ib, gb, k == Bcast::rhs);
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  int ia = a.id();
  return a.graph().record(a.value() * factor, {a}, [ia, factor](Graph& g, int self) {
    g.accumulate(ia, g.upstream(self) * factor);
  });
}

Tensor add_scalar(const Tensor& a, double offset) {
  int ia = a.id();
  Matrix out = a.value().array() + offset;
  return a.graph().record(std::move(out), {a},
                          [ia](Graph& g, int self) { g.accumulate(ia, g.upstream(self)); });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_same_graph(a, b);
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw ConfigurationError("matmul: inner dimensions differ, " + shape_str(av) + " * " +
                             shape_str(bv));
  }
  Matrix out = av * bv;
  int ia = a.id(), ib = b.id();
  return a.graph().record(std::move(out), {a, b}, [ia, ib](Graph& g, int self) {
    const Matrix& up = g.upstream(self);
    if (g.requires_grad(ia)) g.accumulate(ia, up * g.value(ib).transpose());
    if (g.requires_grad(ib)) g.accumulate(ib, g.value(ia).transpose() * up);
  });
}

Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  check_same_graph(x, w);
  check_same_graph(x, b);
  const Matrix& xv = x.value();
  const Matrix& wv = w.value();
  const Matrix& bv = b.value();
  if (xv.cols() != wv.rows() || bv.rows() != 1 || bv.cols() != wv.cols()) {
    throw ConfigurationError("affine: shapes " + shape_str(xv) + ", " + shape_str(wv) + ", " +
                             shape_str(bv) + " do not line up");
  }
  Matrix out = xv * wv;
  out.rowwise() += bv.row(0);
  int ix = x.id(), iw = w.id(), ib = b.id();
  return x.graph().record(std::move(out), {x, w, b}, [ix, iw, ib](Graph& g, int self) {
    const Matrix& up = g.upstream(self);
    if (g.requires_grad(ix)) g.accumulate(ix, up * g.value(iw).transpose());
    if (g.requires_grad(iw)) g.accumulate(iw, g.value(ix).transpose() * up);
    if (g.requires_grad(ib)) g.accumulate(ib, up.colwise().sum());
  });
}

Tensor gru_cell(const Tensor& x, const Tensor& h, const Tensor& w, const Tensor& v,
                const Tensor& b, const Tensor& c) {
  check_same_graph(x, h);
  check_same_graph(x, w);
  check_same_graph(x, v);
  check_same_graph(x, b);
  check_same_graph(x, c);
  const Matrix& xv = x.value();
  const Matrix& hv = h.value();
  const Eigen::Index H = hv.cols();
  const Eigen::Index R = xv.rows();
  if (hv.rows() != R || w.rows() != xv.cols() || w.cols() != 3 * H || v.rows() != H ||
      v.cols() != 3 * H || b.rows() != 1 || b.cols() != 3 * H || c.rows() != 1 ||
      c.cols() != 3 * H) {
    throw ConfigurationError("gru_cell: inconsistent shapes (x " + shape_str(xv) + ", h " +
                             shape_str(hv) + ", w " + shape_str(w.value()) + ", v " +
                             shape_str(v.value()) + ")");
  }
  Matrix gx = xv * w.value();
  gx.rowwise() += b.value().row(0);
  Matrix gh = hv * v.value();
  gh.rowwise() += c.value().row(0);
  auto sig = [](const auto& a) { return (1.0 + (-a).exp()).inverse(); };
  Matrix r = sig((gx.leftCols(H) + gh.leftCols(H)).array());
  Matrix u = sig((gx.middleCols(H, H) + gh.middleCols(H, H)).array());
  Matrix ghn = gh.rightCols(H);
  Matrix n = (gx.rightCols(H).array() + r.array() * ghn.array()).tanh();
  Matrix out = hv.array() + u.array() * (n.array() - hv.array());
  int ix = x.id(), ih = h.id(), iw = w.id(), iv = v.id(), ib = b.id(), ic = c.id();
  return x.graph().record(
      std::move(out), {x, h, w, v, b, c},
      [ix, ih, iw, iv, ib, ic, H, R, r = std::move(r), u = std::move(u), n = std::move(n),
       ghn = std::move(ghn)](Graph& g, int self) {
        const Matrix& up = g.upstream(self);
        const Matrix& hv = g.value(ih);
        Matrix dn = up.array() * u.array() * (1.0 - n.array().square());
        Matrix du = up.array() * (n.array() - hv.array()) * u.array() * (1.0 - u.array());
        Matrix dr = dn.array() * ghn.array() * r.array() * (1.0 - r.array());
        Matrix dgx(R, 3 * H), dgh(R, 3 * H);
        dgx << dr, du, dn;
        dgh << dr, du, Matrix(dn.array() * r.array());
        if (g.requires_grad(ix)) g.accumulate(ix, dgx * g.value(iw).transpose());
        if (g.requires_grad(ih)) {
          Matrix dh = dgh * g.value(iv).transpose();
          dh.array() += up.array() * (1.0 - u.array());
          g.accumulate(ih, dh);
        }
        if (g.requires_grad(iw)) g.accumulate(iw, g.value(ix).transpose() * dgx);
        if (g.requires_grad(iv)) g.accumulate(iv, hv.transpose() * dgh);
        if (g.requires_grad(ib)) g.accumulate(ib, dgx.colwise().sum());
        if (g.requires_grad(ic)) g.accumulate(ic, dgh.colwise().sum());
      });
}

Tensor mul_col(const Tensor& a, const Tensor& c) {
  check_same_graph(a, c);
  const Matrix& av = a.value();
  const Matrix& cv = c.value();
  if (cv.cols() != 1 || cv.rows() != av.rows()) {
    throw ConfigurationError("mul_col: expected " + std::to_string(av.rows()) + "x1 column, got " +
                             shape_str(cv));
  }
  Matrix out = av.array().colwise() * cv.col(0).array();
  int ia = a.id(), ic = c.id();
  return a.graph().record(std::move(out), {a, c}, [ia, ic](Graph& g, int self) {
    const Matrix& up = g.upstream(self);
    if (g.requires_grad(ia)) {
      Matrix ga = up.array().colwise() * g.value(ic).col(0).array();
      g.accumulate(ia, ga);
    }
    if (g.requires_grad(ic)) {
      Matrix gc = up.cwiseProduct(g.value(ia)).rowwise().sum();
      g.accumulate(ic, gc);
    }
  });
}

Tensor add_col(const Tensor& a, const Tensor& c) {
  check_same_graph(a, c);
  const Matrix& av = a.value();
  const Matrix& cv = c.value();
  if (cv.cols() != 1 || cv.rows() != av.rows()) {
    throw ConfigurationError("add_col: expected " + std::to_string(av.rows()) + "x1 column, got " +
                             shape_str(cv));
  }
  Matrix out = av.colwise() + cv.col(0);
  int ia = a.id(), ic = c.id();
  return a.graph().record(std::move(out), {a, c}, [ia, ic](Graph& g, int self) {
    const Matrix& up = g.upstream(self);
    g.accumulate(ia, up);
    if (g.requires_grad(ic)) {
      Matrix gc = up.rowwise().sum();
      g.accumulate(ic, gc);
    }
  });
}

// Elementwise unary -------------------------------------------------------

Tensor tanh(const Tensor& a) {
  Matrix out = a.value().array().tanh();
  int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& g, int self) {
    const Matrix& y = g.value(self);
    Matrix ga = g.upstream(self).array() * (1.0 - y.array().square());
    g.accumulate(ia, ga);
  });
}

Tensor sigmoid(const Tensor& a) {
  Matrix out = a.value().unaryExpr([](double v) {
    if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
  int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& g, int self) {
    const Matrix& y = g.value(self);
    Matrix ga = g.upstream(self).array() * y.array() * (1.0 - y.array());
    g.accumulate(ia, ga);
  });
}

Tensor relu(const Tensor& a) {
  Matrix out = a.value().cwiseMax(0.0);
  int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& g, int self) {
    Matrix ga = (g.value(ia).array() > 0.0).select(g.upstream(self), 0.0);
    g.accumulate(ia, ga);
  });
}

Tensor exp(const Tensor& a) {
  Matrix out = a.value().array().exp();
  int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& g, int self) {
    g.accumulate(ia, g.upstream(self).cwiseProduct(g.value(self)));
  });
}

Tensor log(const Tensor& a) {
  Matrix out = a.value().array().log();
  int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& g, int self) {
    g.accumulate(ia, g.upstream(self).cwiseQuotient(g.value(ia)));
  });
}

Tensor square(const Tensor& a) {
  Matrix out = a.value().array().square();
  int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& g, int self) {
    g.accumulate(ia, 2.0 * g.upstream(self).cwiseProduct(g.value(ia)));
  });
}

Tensor clamp_min(const Tensor& a, double floor) {
  Matrix out = a.value().cwiseMax(floor);
  int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia, floor](Graph& g, int self) {
    Matrix ga = (g.value(ia).array() >= floor).select(g.upstream(self), 0.0);
    g.accumulate(ia, ga);
  });
}

// Reductions ----------------------------------------------------------------

Tensor sum(const Tensor& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  int ia = a.id();
  const Eigen::Index r = a.rows(), c = a.cols();
  return a.graph().record(std::move(out), {a}, [ia, r, c](Graph& g, int self) {
    g.accumulate(ia, Matrix::Constant(r, c, g.upstream(self)(0, 0)));
  });
}

Tensor row_sum(const Tensor& a) {
  Matrix out = a.value().rowwise().sum();
  int ia = a.id();
  const Eigen::Index c = a.cols();
  return a.graph().record(std::move(out), {a}, [ia, c](Graph& g, int self) {
    g.accumulate(ia, g.upstream(self).replicate(1, c));
  });
}

Tensor col_sum(const Tensor& a) {
  Matrix out = a.value().colwise().sum();
  int ia = a.id();
  const Eigen::Index r = a.rows();
  return a.graph().record(std::move(out), {a}, [ia, r](Graph& g, int self) {
    g.accumulate(ia, g.upstream(self).replicate(r, 1));
  });
}

Tensor weighted_sum(const Tensor& a, const Matrix& w) {
  const Matrix& av = a.value();
  if (w.cols() != av.cols() || (w.rows() != av.rows() && w.rows() != 1)) {
    throw ConfigurationError("weighted_sum: weights " + shape_str(w) + " do not fit " +
                             shape_str(av));
  }
  Matrix wb = broadcast_to(w, av.rows());
  Matrix out(1, 1);
  out(0, 0) = av.cwiseProduct(wb).sum();
  int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia, wb = std::move(wb)](Graph& g, int self) {
    g.accumulate(ia, wb * g.upstream(self)(0, 0));
  });
}

// Structural ------------------------------------------------------------

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw UsageError("concat_cols: no inputs");
  Graph& graph = parts.front().graph();
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const Tensor& p : parts) {
    if (&p.graph() != &graph) throw UsageError("concat_cols: tensors from different graphs");
    if (p.rows() != rows) {
      throw ConfigurationError("concat_cols: row counts differ (" + std::to_string(rows) + " vs " +
                               std::to_string(p.rows()) + ")");
    }
    cols += p.cols();
  }
  Matrix out(rows, cols);
  std::vector<int> ids;
  std::vector<Eigen::Index> widths;
  Eigen::Index at = 0;
  for (const Tensor& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
    ids.push_back(p.id());
    widths.push_back(p.cols());
  }
  return graph.record(std::move(out), parts,
                      [ids = std::move(ids), widths = std::move(widths)](Graph& g, int self) {
                        const Matrix& up = g.upstream(self);
                        Eigen::Index off = 0;
                        for (std::size_t i = 0; i < ids.size(); ++i) {
                          if (g.requires_grad(ids[i])) {
                            Matrix part = up.middleCols(off, widths[i]);
                            g.accumulate(ids[i], part);
                          }
                          off += widths[i];
                        }
                      });
}

Tensor slice_cols(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  const Matrix& av = a.value();
  if (begin < 0 || count < 0 || begin + count > av.cols()) {
    throw ConfigurationError("slice_cols: range out of bounds for " + shape_str(av));
  }
  Matrix out = av.middleCols(begin, count);
  int ia = a.id();
  const Eigen::Index r = av.rows(), c = av.cols();
  return a.graph().record(std::move(out), {a}, [ia, begin, count, r, c](Graph& g, int self) {
    Matrix ga = Matrix::Zero(r, c);
    ga.middleCols(begin, count) = g.upstream(self);
    g.accumulate(ia, ga);
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index begin, Eigen::Index count) {
  const Matrix& av = a.value();
  if (begin < 0 || count < 0 || begin + count > av.rows()) {
    throw ConfigurationError("slice_rows: range out of bounds for " + shape_str(av));
  }
  Matrix out = av.middleRows(begin, count);
  int ia = a.id();
  const Eigen::Index r = av.rows(), c = av.cols();
  return a.graph().record(std::move(out), {a}, [ia, begin, count, r, c](Graph& g, int self) {
    Matrix ga = Matrix::Zero(r, c);
    ga.middleRows(begin, count) = g.upstream(self);
    g.accumulate(ia, ga);
  });
}

Tensor reshape(const Tensor& a, Eigen::Index rows, Eigen::Index cols) {
  const Matrix& av = a.value();
  if (rows * cols != av.size()) {
    throw ConfigurationError("reshape: cannot view " + shape_str(av) + " as " +
                             std::to_string(rows) + "x" + std::to_string(cols));
  }
  Matrix out = Eigen::Map<const Matrix>(av.data(), rows, cols);
  int ia = a.id();
  const Eigen::Index r = av.rows(), c = av.cols();
  return a.graph().record(std::move(out), {a}, [ia, r, c](Graph& g, int self) {
    const Matrix& up = g.upstream(self);
    Matrix ga = Eigen::Map<const Matrix>(up.data(), r, c);
    g.accumulate(ia, ga);
  });
}

Tensor broadcast_rows(const Tensor& a, Eigen::Index rows) {
  if (a.rows() != 1) throw ConfigurationError("broadcast_rows: expected a single row");
  Matrix out = a.value().replicate(rows, 1);
  int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& g, int self) {
    Matrix ga = g.upstream(self).colwise().sum();
    g.accumulate(ia, ga);
  });
}

// Softmax family ----------------------------------------------------------

Tensor log_softmax_rows(const Tensor& a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    const double m = av.row(r).maxCoeff();
    const double lse = m + std::log((av.row(r).array() - m).exp().sum());
    out.row(r) = av.row(r).array() - lse;
  }
  int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& g, int self) {
    const Matrix& up = g.upstream(self);
    const Matrix& y = g.value(self);
    Matrix p = y.array().exp();
    Matrix ga = up - (p.array().colwise() * up.rowwise().sum().array()).matrix();
    g.accumulate(ia, ga);
  });
}

Tensor softmax_rows(const Tensor& a) { return exp(log_softmax_rows(a)); }

Tensor logsumexp_rows(const Tensor& a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1);
  for (Eigen::Index r = 0; r < av.rows(); ++r) {
    const double m = av.row(r).maxCoeff();
    out(r, 0) = m + std::log((av.row(r).array() - m).exp().sum());
  }
  int ia = a.id();
  return a.graph().record(std::move(out), {a}, [ia](Graph& g, int self) {
    const Matrix& up = g.upstream(self);
    const Matrix& y = g.value(self);
    Matrix p = (g.value(ia).colwise() - y.col(0)).array().exp();
    Matrix ga = p.array().colwise() * up.col(0).array();
    g.accumulate(ia, ga);
  });
}

// Gaussian ------------------------------------------------------------------

Tensor gaussian_log_prob(const Tensor& x, const Tensor& mean, const Tensor& log_scale) {
  check_same_graph(x, mean);
  check_same_graph(x, log_scale);
  const Matrix& xv = x.value();
  const Eigen::Index rows = std::max({xv.rows(), mean.rows(), log_scale.rows()});
  auto fits = [rows, &xv](const Matrix& m) {
    return m.cols() == xv.cols() && (m.rows() == rows || m.rows() == 1);
  };
  if (!fits(xv) || !fits(mean.value()) || !fits(log_scale.value())) {
    throw ConfigurationError("gaussian_log_prob: shapes " + shape_str(xv) + ", " +
                             shape_str(mean.value()) + ", " + shape_str(log_scale.value()) +
                             " do not agree");
  }
  const Matrix xb = broadcast_to(xv, rows);
  const Matrix mb = broadcast_to(mean.value(), rows);
  const Matrix sb = broadcast_to(log_scale.value(), rows);
  if (!xb.allFinite() || !mb.allFinite() || !sb.allFinite()) {
    throw NumericError("gaussian_log_prob: non-finite input");
  }
  // standardized residual
  Matrix u = (xb - mb).array() * (-sb.array()).exp();
  Matrix out = (-0.5 * kLog2Pi - sb.array() - 0.5 * u.array().square()).rowwise().sum();
  int ix = x.id(), im = mean.id(), is = log_scale.id();
  const bool bx = xv.rows() != rows, bm = mean.rows() != rows, bs = log_scale.rows() != rows;
  return x.graph().record(
      std::move(out), {x, mean, log_scale},
      [ix, im, is, bx, bm, bs, u = std::move(u), sb](Graph& g, int self) {
        const Eigen::ArrayXd up = g.upstream(self).col(0).array();
        // d/dx = -u/σ, d/dμ = u/σ, d/dlogσ = -1 + u²
        Matrix dmu = (u.array() * (-sb.array()).exp()).colwise() * up;
        if (g.requires_grad(ix)) {
          Matrix dx = -dmu;
          accumulate_reduced(g, ix, dx, bx);
        }
        accumulate_reduced(g, im, dmu, bm);
        if (g.requires_grad(is)) {
          Matrix ds = (u.array().square() - 1.0).colwise() * up;
          accumulate_reduced(g, is, ds, bs);
        }
      });
}

Tensor gaussian_entropy(const Tensor& log_scale) {
  const Matrix& sv = log_scale.value();
  if (!sv.allFinite()) throw NumericError("gaussian_entropy: non-finite log-scale");
  Matrix out = (sv.array() + 0.5 * (1.0 + kLog2Pi)).rowwise().sum();
  int is = log_scale.id();
  const Eigen::Index c = sv.cols();
  return log_scale.graph().record(std::move(out), {log_scale}, [is, c](Graph& g, int self) {
    g.accumulate(is, g.upstream(self).replicate(1, c));
  });
}

double gaussian_log_prob(const RowVector& x, const RowVector& mean, const RowVector& log_scale) {
  if (x.size() != mean.size() || x.size() != log_scale.size()) {
    throw ConfigurationError("gaussian_log_prob: dimension mismatch");
  }
  if (!x.allFinite() || !mean.allFinite() || !log_scale.allFinite()) {
    throw NumericError("gaussian_log_prob: non-finite input");
  }
  double total = 0.0;
  for (Eigen::Index d = 0; d < x.size(); ++d) {
    const double u = (x[d] - mean[d]) * std::exp(-log_scale[d]);
    total += -0.5 * kLog2Pi - log_scale[d] - 0.5 * u * u;
  }
  return total;
}

double gaussian_entropy(const RowVector& log_scale) {
  if (!log_scale.allFinite()) throw NumericError("gaussian_entropy: non-finite log-scale");
  return (log_scale.array() + 0.5 * (1.0 + kLog2Pi)).sum();
}

// Log-space message products --------------------------------------------

namespace {

Eigen::Index infer_states(const Matrix& vec, const Matrix& mat, const char* op) {
  const Eigen::Index k = vec.cols();
  if (mat.cols() != k * k || (mat.rows() != vec.rows() && mat.rows() != 1)) {
    throw ConfigurationError(std::string(op) + ": expected " + std::to_string(vec.rows()) + "x" +
                             std::to_string(k * k) + " transition block, got " + shape_str(mat));
  }
  return k;
}

}  // namespace

Tensor log_vecmat(const Tensor& alpha, const Tensor& log_a) {
  check_same_graph(alpha, log_a);
  const Matrix& av = alpha.value();
  const Matrix& mv = log_a.value();
  const Eigen::Index K = infer_states(av, mv, "log_vecmat");
  const Eigen::Index R = av.rows();
  const bool shared = mv.rows() != R;
  Matrix out(R, K);
  for (Eigen::Index b = 0; b < R; ++b) {
    const auto m = mv.row(shared ? 0 : b);
    for (Eigen::Index k = 0; k < K; ++k) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < K; ++j) mx = std::max(mx, av(b, j) + m(j * K + k));
      double s = 0.0;
      for (Eigen::Index j = 0; j < K; ++j) s += std::exp(av(b, j) + m(j * K + k) - mx);
      out(b, k) = mx + std::log(s);
    }
  }
  int ia = alpha.id(), im = log_a.id();
  return alpha.graph().record(std::move(out), {alpha, log_a}, [ia, im, K, R, shared](Graph& g,
                                                                                    int self) {
    const Matrix& up = g.upstream(self);
    const Matrix& y = g.value(self);
    const Matrix& av = g.value(ia);
    const Matrix& mv = g.value(im);
    Matrix ga = Matrix::Zero(R, K);
    Matrix gm = Matrix::Zero(shared ? 1 : R, K * K);
    for (Eigen::Index b = 0; b < R; ++b) {
      const Eigen::Index mb = shared ? 0 : b;
      for (Eigen::Index j = 0; j < K; ++j) {
        for (Eigen::Index k = 0; k < K; ++k) {
          const double w = std::exp(av(b, j) + mv(mb, j * K + k) - y(b, k)) * up(b, k);
          ga(b, j) += w;
          gm(mb, j * K + k) += w;
        }
      }
    }
    g.accumulate(ia, ga);
    g.accumulate(im, gm);
  });
}

Tensor log_matvec(const Tensor& log_a, const Tensor& beta) {
  check_same_graph(log_a, beta);
  const Matrix& bv = beta.value();
  const Matrix& mv = log_a.value();
  const Eigen::Index K = infer_states(bv, mv, "log_matvec");
  const Eigen::Index R = bv.rows();
  const bool shared = mv.rows() != R;
  Matrix out(R, K);
  for (Eigen::Index b = 0; b < R; ++b) {
    const auto m = mv.row(shared ? 0 : b);
    for (Eigen::Index j = 0; j < K; ++j) {
      double mx = -std::numeric_limits<double>::infinity();
      for (Eigen::Index k = 0; k < K; ++k) mx = std::max(mx, m(j * K + k) + bv(b, k));
      double s = 0.0;
      for (Eigen::Index k = 0; k < K; ++k) s += std::exp(m(j * K + k) + bv(b, k) - mx);
      out(b, j) = mx + std::log(s);
    }
  }
  int im = log_a.id(), ib = beta.id();
  return log_a.graph().record(std::move(out), {log_a, beta}, [im, ib, K, R, shared](Graph& g,
                                                                                   int self) {
    const Matrix& up = g.upstream(self);
    const Matrix& y = g.value(self);
    const Matrix& bv = g.value(ib);
    const Matrix& mv = g.value(im);
    Matrix gb = Matrix::Zero(R, K);
    Matrix gm = Matrix::Zero(shared ? 1 : R, K * K);
    for (Eigen::Index b = 0; b < R; ++b) {
      const Eigen::Index mb = shared ? 0 : b;
      for (Eigen::Index j = 0; j < K; ++j) {
        for (Eigen::Index k = 0; k < K; ++k) {
          const double w = std::exp(mv(mb, j * K + k) + bv(b, k) - y(b, j)) * up(b, j);
          gb(b, k) += w;
          gm(mb, j * K + k) += w;
        }
      }
    }
    g.accumulate(ib, gb);
    g.accumulate(im, gm);
  });
}

Tensor bilinear_rows(const Tensor& u, const Tensor& m, const Tensor& v) {
  check_same_graph(u, m);
  check_same_graph(u, v);
  const Matrix& uv = u.value();
  const Matrix& vv = v.value();
  const Matrix& mv = m.value();
  const Eigen::Index K = infer_states(uv, mv, "bilinear_rows");
  const Eigen::Index R = uv.rows();
  if (vv.rows() != R || vv.cols() != K) {
    throw ConfigurationError("bilinear_rows: right operand has shape " + shape_str(vv));
  }
  const bool shared = mv.rows() != R;
  Matrix out(R, 1);
  for (Eigen::Index b = 0; b < R; ++b) {
    const Eigen::Index mb = shared ? 0 : b;
    double s = 0.0;
    for (Eigen::Index j = 0; j < K; ++j) {
      for (Eigen::Index k = 0; k < K; ++k) s += uv(b, j) * mv(mb, j * K + k) * vv(b, k);
    }
    out(b, 0) = s;
  }
  int iu = u.id(), im = m.id(), iv = v.id();
  return u.graph().record(std::move(out), {u, m, v}, [iu, im, iv, K, R, shared](Graph& g,
                                                                                int self) {
    const Matrix& up = g.upstream(self);
    const Matrix& uv = g.value(iu);
    const Matrix& mv = g.value(im);
    const Matrix& vv = g.value(iv);
    Matrix gu = Matrix::Zero(R, K), gv = Matrix::Zero(R, K);
    Matrix gm = Matrix::Zero(shared ? 1 : R, K * K);
    for (Eigen::Index b = 0; b < R; ++b) {
      const Eigen::Index mb = shared ? 0 : b;
      const double w = up(b, 0);
      for (Eigen::Index j = 0; j < K; ++j) {
        for (Eigen::Index k = 0; k < K; ++k) {
          const double a = mv(mb, j * K + k);
          gu(b, j) += w * a * vv(b, k);
          gv(b, k) += w * a * uv(b, j);
          gm(mb, j * K + k) += w * uv(b, j) * vv(b, k);
        }
      }
    }
    g.accumulate(iu, gu);
    g.accumulate(im, gm);
    g.accumulate(iv, gv);
  });
}

}  // namespace snlds::nn
