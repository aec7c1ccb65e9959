#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "oracles.hpp"
#include "snlds/nn/checkpoint.hpp"
#include "snlds/nn/layers.hpp"

using namespace snlds::nn;

namespace {

Matrix randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Matrix positive(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.5, 2.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

// Builds op(inputs) on a fresh graph and contracts with fixed weights so the
// root is scalar. Returns the maximum relative error over all input entries.
double check_op(std::vector<Matrix> inputs,
                const std::function<Tensor(const std::vector<Tensor>&)>& op, std::mt19937_64& rng) {
  Matrix weights;
  auto eval = [&](bool keep, std::vector<Matrix>* grads) {
    Graph g;
    std::vector<Tensor> vars;
    for (const Matrix& m : inputs) vars.push_back(g.variable(m));
    Tensor out = op(vars);
    if (weights.size() == 0) weights = randn(out.rows(), out.cols(), rng);
    Tensor root = weighted_sum(out, weights);
    if (keep) {
      g.backward(root);
      for (const Tensor& v : vars) grads->push_back(v.grad());
    }
    return root.item();
  };
  std::vector<Matrix> grads;
  eval(true, &grads);
  double worst = 0.0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Matrix fd = oracle::numeric_gradient(inputs[i], [&] { return eval(false, nullptr); });
    for (Eigen::Index j = 0; j < fd.size(); ++j) {
      worst = std::max(worst, oracle::rel_error(grads[i].data()[j], fd.data()[j]));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("finite differences agree with reverse mode for every operation") {
  std::mt19937_64 rng(11);
  using Ops = std::vector<Tensor>;
  struct Case {
    std::string name;
    std::function<std::vector<Matrix>(std::mt19937_64&)> inputs;
    std::function<Tensor(const Ops&)> op;
  };
  const std::vector<Case> cases = {
      {"add", [](auto& r) { return std::vector{randn(3, 4, r), randn(1, 4, r)}; },
       [](const Ops& v) { return add(v[0], v[1]); }},
      {"sub", [](auto& r) { return std::vector{randn(3, 4, r), randn(3, 4, r)}; },
       [](const Ops& v) { return sub(v[0], v[1]); }},
      {"mul", [](auto& r) { return std::vector{randn(3, 4, r), randn(1, 4, r)}; },
       [](const Ops& v) { return mul(v[0], v[1]); }},
      {"scale/add_scalar", [](auto& r) { return std::vector{randn(2, 3, r)}; },
       [](const Ops& v) { return add_scalar(scale(v[0], -1.7), 0.3); }},
      {"matmul", [](auto& r) { return std::vector{randn(3, 4, r), randn(4, 2, r)}; },
       [](const Ops& v) { return matmul(v[0], v[1]); }},
      {"affine", [](auto& r) { return std::vector{randn(3, 4, r), randn(4, 2, r), randn(1, 2, r)}; },
       [](const Ops& v) { return affine(v[0], v[1], v[2]); }},
      {"gru_cell",
       [](auto& r) {
         return std::vector{randn(3, 2, r), randn(3, 4, r, 0.5), randn(2, 12, r), randn(4, 12, r),
                            randn(1, 12, r), randn(1, 12, r)};
       },
       [](const Ops& v) { return gru_cell(v[0], v[1], v[2], v[3], v[4], v[5]); }},
      {"mul_col/add_col", [](auto& r) { return std::vector{randn(3, 4, r), randn(3, 1, r)}; },
       [](const Ops& v) { return add_col(mul_col(v[0], v[1]), v[1]); }},
      {"tanh/sigmoid", [](auto& r) { return std::vector{randn(3, 3, r)}; },
       [](const Ops& v) { return mul(tanh(v[0]), sigmoid(v[0])); }},
      {"relu", [](auto& r) { return std::vector{randn(3, 3, r)}; },
       [](const Ops& v) { return relu(v[0]); }},
      {"exp/log/square", [](auto& r) { return std::vector{positive(2, 3, r)}; },
       [](const Ops& v) { return add(log(v[0]), square(exp(scale(v[0], 0.3)))); }},
      {"clamp_min", [](auto& r) { return std::vector{randn(4, 4, r)}; },
       [](const Ops& v) { return clamp_min(v[0], 0.05); }},
      {"sums", [](auto& r) { return std::vector{randn(3, 4, r)}; },
       [](const Ops& v) {
         return add_col(matmul(row_sum(v[0]), col_sum(v[0])), broadcast_rows(sum(v[0]), 3));
       }},
      {"concat/slice/reshape", [](auto& r) { return std::vector{randn(2, 3, r), randn(2, 2, r)}; },
       [](const Ops& v) {
         Tensor c = concat_cols({v[0], v[1]});
         return reshape(slice_rows(slice_cols(c, 1, 4), 1, 1), 2, 2);
       }},
      {"softmax family", [](auto& r) { return std::vector{randn(3, 4, r)}; },
       [](const Ops& v) {
         return add_col(add(log_softmax_rows(v[0]), softmax_rows(v[0])),
                        broadcast_rows(sum(logsumexp_rows(v[0])), 3));
       }},
      {"gaussian_log_prob",
       [](auto& r) { return std::vector{randn(3, 2, r), randn(3, 2, r), randn(1, 2, r, 0.3)}; },
       [](const Ops& v) { return gaussian_log_prob(v[0], v[1], v[2]); }},
      {"gaussian_entropy", [](auto& r) { return std::vector{randn(3, 2, r)}; },
       [](const Ops& v) { return gaussian_entropy(v[0]); }},
      {"log_vecmat", [](auto& r) { return std::vector{randn(2, 3, r), randn(2, 9, r)}; },
       [](const Ops& v) { return log_vecmat(v[0], v[1]); }},
      {"log_matvec", [](auto& r) { return std::vector{randn(1, 9, r), randn(2, 3, r)}; },
       [](const Ops& v) { return log_matvec(v[0], v[1]); }},
      {"bilinear_rows",
       [](auto& r) { return std::vector{randn(2, 3, r), randn(2, 9, r), randn(2, 3, r)}; },
       [](const Ops& v) { return bilinear_rows(v[0], v[1], v[2]); }},
  };
  int trials = 0;
  for (int round = 0; round < 6; ++round) {
    for (const Case& c : cases) {
      CAPTURE(c.name);
      CHECK(check_op(c.inputs(rng), c.op, rng) <= 1e-4);
      ++trials;
    }
  }
  CHECK(trials >= 100);
}

TEST_CASE("simple gradients") {
  Graph g;
  Tensor x = g.variable(Matrix::Constant(1, 1, 3.0));
  g.backward(mul(x, x));
  CHECK(x.grad()(0, 0) == doctest::Approx(6.0));

  Parameter p("p", Matrix::Constant(1, 5, 0.2));
  p.zero_grad();
  Graph h;
  h.backward(sum(h.param(p)));
  CHECK(p.grad().isApprox(Matrix::Ones(1, 5)));

  Graph k;
  Tensor v = k.variable(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(k.backward(v), UsageError);
}

TEST_CASE("mlp matches a hand-rolled matrix product") {
  Rng rng(3);
  Mlp id("id", MlpSpec::make(2, {}, 2), rng);
  id.layers()[0].weight().value() = Matrix::Identity(2, 2);
  Graph g;
  Matrix in(1, 2);
  in << 1.0, 2.0;
  CHECK(id.forward(g, g.constant(in)).value().isApprox(in));

  Mlp zero("z", MlpSpec::make(3, {4}, 2), rng);
  for (Parameter* p : zero.parameters()) p->value().setZero();
  CHECK(zero.forward(g, g.constant(Matrix::Random(2, 3))).value().isZero());

  Mlp net("n", MlpSpec::make(3, {5}, 2), rng);
  for (Parameter* p : net.parameters()) {
    std::normal_distribution<double> n;
    for (Eigen::Index i = 0; i < p->value().size(); ++i) p->value().data()[i] = n(rng);
  }
  Matrix x = Matrix::Random(4, 3);
  const Matrix& w1 = net.layers()[0].weight().value();
  const Matrix& b1 = net.layers()[0].bias().value();
  const Matrix& w2 = net.layers()[1].weight().value();
  const Matrix& b2 = net.layers()[1].bias().value();
  Matrix expect(4, 2);
  for (int r = 0; r < 4; ++r) {
    std::vector<double> hidden(5);
    for (int j = 0; j < 5; ++j) {
      double a = b1(0, j);
      for (int i = 0; i < 3; ++i) a += x(r, i) * w1(i, j);
      hidden[static_cast<std::size_t>(j)] = std::max(0.0, a);
    }
    for (int k = 0; k < 2; ++k) {
      double a = b2(0, k);
      for (int j = 0; j < 5; ++j) a += hidden[static_cast<std::size_t>(j)] * w2(j, k);
      expect(r, k) = a;
    }
  }
  CHECK((net.forward(g, g.constant(x)).value() - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(net.forward(g, g.constant(Matrix::Zero(1, 2))), ConfigurationError);
}

TEST_CASE("gru cell against a scalar reference") {
  Rng rng(5);
  const int I = 3, H = 4;
  GruCell cell("g", I, H, rng);
  for (Parameter* p : cell.parameters()) {
    std::normal_distribution<double> n(0.0, 0.7);
    for (Eigen::Index i = 0; i < p->value().size(); ++i) p->value().data()[i] = n(rng);
  }
  Matrix x = Matrix::Random(2, I);
  Matrix h = Matrix::Random(2, H) * 0.8;
  const Matrix& W = cell.input_weight().value();
  const Matrix& U = cell.hidden_weight().value();
  const Matrix& b = cell.input_bias().value();
  const Matrix& c = cell.hidden_bias().value();
  auto sig = [](double a) { return 1.0 / (1.0 + std::exp(-a)); };
  Matrix expect(2, H);
  for (int r = 0; r < 2; ++r) {
    for (int j = 0; j < H; ++j) {
      double xr = b(0, j), xu = b(0, H + j), xn = b(0, 2 * H + j);
      double hr = c(0, j), hu = c(0, H + j), hn = c(0, 2 * H + j);
      for (int i = 0; i < I; ++i) {
        xr += x(r, i) * W(i, j);
        xu += x(r, i) * W(i, H + j);
        xn += x(r, i) * W(i, 2 * H + j);
      }
      for (int i = 0; i < H; ++i) {
        hr += h(r, i) * U(i, j);
        hu += h(r, i) * U(i, H + j);
        hn += h(r, i) * U(i, 2 * H + j);
      }
      const double rg = sig(xr + hr);
      const double ug = sig(xu + hu);
      const double n = std::tanh(xn + rg * hn);
      expect(r, j) = (1.0 - ug) * h(r, j) + ug * n;
    }
  }
  Graph g;
  Matrix got = cell.step(g, g.constant(x), g.constant(h)).value();
  CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);

  // Zero parameters and zero state stay at zero.
  GruCell zero("z", I, H, rng);
  for (Parameter* p : zero.parameters()) p->value().setZero();
  CHECK(zero.step(g, g.constant(Matrix::Zero(1, I)), g.constant(Matrix::Zero(1, H))).value().isZero());

  // A saturated update gate returns the candidate activation.
  cell.input_bias().value().block(0, H, 1, H).setConstant(50.0);
  Graph fresh;
  Matrix sat = cell.step(fresh, fresh.constant(x), fresh.constant(h)).value();
  for (int r = 0; r < 2; ++r) {
    for (int j = 0; j < H; ++j) {
      double xn = cell.input_bias().value()(0, 2 * H + j), hn = c(0, 2 * H + j), xr = b(0, j), hr = c(0, j);
      for (int i = 0; i < I; ++i) {
        xn += x(r, i) * W(i, 2 * H + j);
        xr += x(r, i) * W(i, j);
      }
      for (int i = 0; i < H; ++i) {
        hn += h(r, i) * U(i, 2 * H + j);
        hr += h(r, i) * U(i, j);
      }
      CHECK(sat(r, j) == doctest::Approx(std::tanh(xn + sig(xr + hr) * hn)).epsilon(1e-9));
      CHECK(std::abs(sat(r, j)) < 1.0);
    }
  }
}

TEST_CASE("gaussian densities") {
  RowVector zero = RowVector::Zero(1), one = RowVector::Ones(1);
  CHECK(gaussian_log_prob(zero, zero, zero) == doctest::Approx(-0.918939).epsilon(1e-6));
  CHECK(gaussian_log_prob(one, zero, zero) == doctest::Approx(-1.418939).epsilon(1e-6));
  CHECK(gaussian_entropy(zero) == doctest::Approx(1.418939).epsilon(1e-6));
  CHECK(gaussian_entropy(RowVector::Zero(2)) == doctest::Approx(2.837877).epsilon(1e-6));
  RowVector ls(3);
  ls << 0.1, -0.4, 0.9;
  RowVector doubled = ls.array() + std::log(2.0);
  CHECK(gaussian_entropy(doubled) - gaussian_entropy(ls) == doctest::Approx(3 * std::log(2.0)));

  std::mt19937_64 rng(8);
  std::normal_distribution<double> n;
  for (int trial = 0; trial < 20; ++trial) {
    RowVector x(4), m(4), s(4);
    for (int d = 0; d < 4; ++d) {
      x[d] = n(rng);
      m[d] = n(rng);
      s[d] = 0.5 * n(rng);
    }
    double expect = 0.0;
    for (int d = 0; d < 4; ++d) {
      const double sigma = std::exp(s[d]);
      expect += std::log(1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi))) -
                (x[d] - m[d]) * (x[d] - m[d]) / (2.0 * sigma * sigma);
    }
    CHECK(gaussian_log_prob(x, m, s) == doctest::Approx(expect).epsilon(1e-12));
    Graph g;
    Tensor t = gaussian_log_prob(g.constant(Matrix(x)), g.constant(Matrix(m)), g.constant(Matrix(s)));
    CHECK(t.item() == doctest::Approx(expect).epsilon(1e-12));
  }

  // Trapezoid integral of the density over ±8σ.
  const double mu = 0.7, log_sigma = -0.3, sigma = std::exp(log_sigma);
  const int steps = 200000;
  const double a = mu - 8 * sigma, b = mu + 8 * sigma, h = (b - a) / steps;
  double area = 0.0;
  for (int i = 0; i <= steps; ++i) {
    RowVector x = RowVector::Constant(1, a + i * h);
    const double f = std::exp(gaussian_log_prob(x, RowVector::Constant(1, mu), RowVector::Constant(1, log_sigma)));
    area += (i == 0 || i == steps) ? 0.5 * f : f;
  }
  CHECK(std::abs(area * h - 1.0) < 1e-6);

  RowVector bad = RowVector::Constant(1, std::nan(""));
  CHECK_THROWS_AS(gaussian_log_prob(bad, zero, zero), NumericError);
}

TEST_CASE("forward evaluation is deterministic") {
  Rng a(9), b(9);
  Mlp n1("n", MlpSpec::make(2, {3}, 2), a);
  Mlp n2("n", MlpSpec::make(2, {3}, 2), b);
  Graph g;
  Matrix x = Matrix::Random(3, 2);
  CHECK(n1.forward(g, g.constant(x)).value() == n2.forward(g, g.constant(x)).value());
}

TEST_CASE("bidirectional encoder sees the whole sequence") {
  Rng rng(4);
  BidirectionalEncoder enc("e", 1, 3, rng);
  std::vector<Matrix> x(5, Matrix::Random(1, 1));
  auto run = [&](const std::vector<Matrix>& seq) {
    Graph g;
    std::vector<Tensor> in;
    for (const auto& m : seq) in.push_back(g.constant(m));
    return Matrix(enc.forward(g, in).front().value());
  };
  Matrix before = run(x);
  x.back()(0, 0) += 1.0;
  CHECK((run(x) - before).norm() > 0.0);
  CHECK(before.cols() == 6);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(1);
  Mlp net("net", MlpSpec::make(3, {4}, 2), rng);
  Checkpoint ck;
  ck.step = 42;
  ck.arrays = snapshot(net.parameters());
  std::stringstream buf;
  write_checkpoint(buf, ck);
  Checkpoint back = read_checkpoint(buf);
  CHECK(back == ck);

  Mlp other("net", MlpSpec::make(3, {4}, 2), rng);
  restore(back, other.parameters());
  for (std::size_t i = 0; i < net.parameters().size(); ++i) {
    CHECK(net.parameters()[i]->value() == other.parameters()[i]->value());
  }
  Mlp wrong("net", MlpSpec::make(3, {5}, 2), rng);
  CHECK_THROWS_AS(restore(back, wrong.parameters()), CheckpointError);

  std::stringstream junk("not a checkpoint");
  CHECK_THROWS_AS(read_checkpoint(junk), CheckpointError);
}
