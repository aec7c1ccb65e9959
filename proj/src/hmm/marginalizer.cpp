// SPDX-License-Identifier: Apache-2.0
#include "snlds/hmm/marginalizer.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace snlds::hmm {

using nn::ConfigurationError;
using nn::Graph;
using nn::NumericError;
using nn::UsageError;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <typename Vec>
double log_sum_exp(const Vec& v) {
  const double m = v.maxCoeff();
  if (m == kNegInf) return kNegInf;
  return m + std::log((v.array() - m).exp().sum());
}

bool has_nan(const Matrix& m) { return m.array().isNaN().any(); }

}  // namespace

void LogPotentials::validate(double tolerance) const {
  const int T = steps();
  const int K = states();
  if (T < 1 || K < 1) throw ConfigurationError("potentials need T >= 1 and K >= 1");
  if (log_pi.size() != K) throw ConfigurationError("log_pi has the wrong length");
  if (static_cast<int>(log_A.size()) != T - 1) {
    throw ConfigurationError("expected " + std::to_string(T - 1) + " transition blocks, got " +
                             std::to_string(log_A.size()));
  }
  if (!log_B.allFinite()) throw NumericError("log_B has non-finite entries");
  if (std::abs(log_pi.array().exp().sum() - 1.0) > tolerance) {
    throw NumericError("exp(log_pi) does not sum to one");
  }
  for (std::size_t t = 0; t < log_A.size(); ++t) {
    const Matrix& a = log_A[t];
    if (a.rows() != K || a.cols() != K) throw ConfigurationError("transition block is not K x K");
    for (int j = 0; j < K; ++j) {
      if (std::abs(a.row(j).array().exp().sum() - 1.0) > tolerance) {
        throw NumericError("row " + std::to_string(j) + " of transition block " +
                           std::to_string(t) + " is not normalised");
      }
    }
  }
}

DiscretePosterior forward_backward(const LogPotentials& pot) {
  const int T = pot.steps();
  const int K = pot.states();
  if (T < 1 || K < 1) throw ConfigurationError("forward_backward needs T >= 1 and K >= 1");
  if (pot.log_pi.size() != K || static_cast<int>(pot.log_A.size()) != T - 1) {
    throw ConfigurationError("forward_backward: inconsistent potential shapes");
  }
  if (has_nan(pot.log_B) || pot.log_pi.array().isNaN().any()) {
    throw NumericError("forward_backward: NaN in potentials");
  }
  for (const Matrix& a : pot.log_A) {
    if (a.rows() != K || a.cols() != K) {
      throw ConfigurationError("forward_backward: transition block is not K x K");
    }
    if (has_nan(a)) throw NumericError("forward_backward: NaN in potentials");
  }

  Matrix alpha(T, K);
  Matrix beta = Matrix::Zero(T, K);
  alpha.row(0) = pot.log_pi + pot.log_B.row(0);
  RowVector tmp(K);
  for (int t = 1; t < T; ++t) {
    const Matrix& a = pot.log_A[static_cast<std::size_t>(t - 1)];
    for (int k = 0; k < K; ++k) {
      tmp = alpha.row(t - 1) + a.col(k).transpose();
      alpha(t, k) = pot.log_B(t, k) + log_sum_exp(tmp);
    }
  }
  for (int t = T - 1; t >= 1; --t) {
    const Matrix& a = pot.log_A[static_cast<std::size_t>(t - 1)];
    const RowVector right = pot.log_B.row(t) + beta.row(t);
    for (int j = 0; j < K; ++j) {
      tmp = a.row(j) + right;
      beta(t - 1, j) = log_sum_exp(tmp);
    }
  }

  DiscretePosterior post;
  post.log_Z = log_sum_exp(alpha.row(T - 1));
  if (!std::isfinite(post.log_Z)) throw NumericError("forward_backward: log-normaliser is not finite");
  post.gamma1 = ((alpha + beta).array() - post.log_Z).exp();
  post.gamma2.reserve(static_cast<std::size_t>(T - 1));
  for (int t = 1; t < T; ++t) {
    const Matrix& a = pot.log_A[static_cast<std::size_t>(t - 1)];
    Matrix g(K, K);
    for (int j = 0; j < K; ++j) {
      for (int k = 0; k < K; ++k) {
        g(j, k) = std::exp(alpha(t - 1, j) + a(j, k) + pot.log_B(t, k) + beta(t, k) - post.log_Z);
      }
    }
    post.gamma2.push_back(std::move(g));
  }
  return post;
}

LogPotentials PotentialTensors::values(int b) const {
  const int T = steps();
  const int K = states();
  LogPotentials out;
  out.log_B.resize(T, K);
  for (int t = 0; t < T; ++t) out.log_B.row(t) = log_B[static_cast<std::size_t>(t)].value().row(b);
  out.log_pi = log_pi.value().row(0);
  out.log_A.reserve(static_cast<std::size_t>(T - 1));
  for (const Tensor& a : log_A) {
    const Matrix& v = a.value();
    const auto row = v.row(v.rows() == 1 ? 0 : b);
    out.log_A.emplace_back(Eigen::Map<const Matrix>(row.data(), K, K));
  }
  return out;
}

Tensor surrogate_loss(const PotentialTensors& pot, const std::vector<DiscretePosterior>& post) {
  const int T = pot.steps();
  const int K = pot.states();
  const int B = pot.batch();
  if (static_cast<int>(post.size()) != B) {
    throw UsageError("surrogate_loss: " + std::to_string(post.size()) + " posteriors for a batch of " +
                     std::to_string(B));
  }
  for (const auto& p : post) {
    if (p.gamma1.rows() != T || p.gamma1.cols() != K ||
        static_cast<int>(p.gamma2.size()) != T - 1) {
      throw UsageError("surrogate_loss: posterior shape does not match potentials");
    }
  }
  std::vector<Tensor> terms;
  terms.reserve(static_cast<std::size_t>(2 * T));
  Matrix w(B, K);
  for (int t = 0; t < T; ++t) {
    for (int b = 0; b < B; ++b) w.row(b) = post[static_cast<std::size_t>(b)].gamma1.row(t);
    terms.push_back(nn::weighted_sum(pot.log_B[static_cast<std::size_t>(t)], w));
  }
  Matrix first(1, K);
  first.setZero();
  for (const auto& p : post) first += p.gamma1.row(0);
  terms.push_back(nn::weighted_sum(pot.log_pi, first));
  for (int t = 1; t < T; ++t) {
    const Tensor& a = pot.log_A[static_cast<std::size_t>(t - 1)];
    Matrix w2(a.rows(), K * K);
    w2.setZero();
    for (int b = 0; b < B; ++b) {
      const Matrix& g = post[static_cast<std::size_t>(b)].gamma2[static_cast<std::size_t>(t - 1)];
      w2.row(a.rows() == 1 ? 0 : b) += Eigen::Map<const nn::RowVector>(g.data(), K * K);
    }
    terms.push_back(nn::weighted_sum(a, w2));
  }
  return nn::sum(nn::concat_cols(terms));
}

MarginalTensors forward_backward(const PotentialTensors& pot) {
  const int T = pot.steps();
  if (T < 1) throw ConfigurationError("forward_backward needs T >= 1");
  std::vector<Tensor> alpha(static_cast<std::size_t>(T)), beta(static_cast<std::size_t>(T));
  alpha[0] = nn::add(pot.log_B[0], pot.log_pi);
  for (int t = 1; t < T; ++t) {
    const auto i = static_cast<std::size_t>(t);
    alpha[i] = nn::add(pot.log_B[i], nn::log_vecmat(alpha[i - 1], pot.log_A[i - 1]));
  }
  Graph& g = pot.log_pi.graph();
  beta[static_cast<std::size_t>(T - 1)] = g.constant(Matrix::Zero(pot.batch(), pot.states()));
  for (int t = T - 1; t >= 1; --t) {
    const auto i = static_cast<std::size_t>(t);
    beta[i - 1] = nn::log_matvec(pot.log_A[i - 1], nn::add(pot.log_B[i], beta[i]));
  }
  MarginalTensors out;
  out.log_Z = nn::logsumexp_rows(alpha.back());
  out.log_gamma1.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const auto i = static_cast<std::size_t>(t);
    out.log_gamma1.push_back(nn::log_softmax_rows(nn::add(alpha[i], beta[i])));
  }
  return out;
}

double posterior_uniform_kl(const Matrix& gamma1, double floor) {
  const double K = static_cast<double>(gamma1.cols());
  double total = 0.0;
  for (Eigen::Index t = 0; t < gamma1.rows(); ++t) {
    for (Eigen::Index k = 0; k < gamma1.cols(); ++k) {
      const double q = std::max(gamma1(t, k), floor);
      total += (1.0 / K) * (std::log(1.0 / K) - std::log(q));
    }
  }
  return total;
}

Tensor posterior_uniform_kl(const std::vector<Tensor>& log_gamma1, double floor) {
  if (log_gamma1.empty()) throw UsageError("posterior_uniform_kl: empty sequence");
  const double K = static_cast<double>(log_gamma1.front().cols());
  const double log_floor = std::log(floor);
  // KL(u || γ) = Σ_k (1/K)(log(1/K) - log γ_k) = -log K - mean_k log γ_k
  Tensor acc;
  for (const Tensor& lg : log_gamma1) {
    Tensor term = nn::row_sum(nn::clamp_min(lg, log_floor));
    acc = acc.valid() ? nn::add(acc, term) : term;
  }
  const double T = static_cast<double>(log_gamma1.size());
  return nn::add_scalar(nn::scale(acc, -1.0 / K), -T * std::log(K));
}

Matrix apply_temperature(const Matrix& logits, double tau) {
  if (!(tau > 0.0)) throw UsageError("temperature must be positive");
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const RowVector z = logits.row(r) / tau;
    const double lse = log_sum_exp(z);
    out.row(r) = (z.array() - lse).exp();
  }
  return out;
}

Tensor tempered_log_softmax(const Tensor& logits, double tau) {
  if (!(tau > 0.0)) throw UsageError("temperature must be positive");
  if (tau == 1.0) return nn::log_softmax_rows(logits);
  return nn::log_softmax_rows(nn::scale(logits, 1.0 / tau));
}

}  // namespace snlds::hmm
