// SPDX-License-Identifier: Apache-2.0
#include "snlds/train/gumbel.hpp"

#include <cmath>
#include <limits>

namespace snlds::train {

Matrix gumbel_noise(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  // Open interval keeps both logs finite.
  std::uniform_real_distribution<double> uniform(std::numeric_limits<double>::min(), 1.0);
  Matrix g(rows, cols);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = -std::log(-std::log(uniform(rng)));
  return g;
}

Matrix gumbel_softmax_sample(const Matrix& logits, double tau, std::mt19937_64& rng) {
  if (!(tau > 0.0)) throw nn::UsageError("Gumbel-Softmax temperature must be positive");
  Matrix out(logits.rows(), logits.cols());
  const Matrix noise = gumbel_noise(logits.rows(), logits.cols(), rng);
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double m = logits.row(r).maxCoeff();
    const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
    nn::RowVector a = (logits.row(r).array() - lse + noise.row(r).array()) / tau;
    a.array() -= a.maxCoeff();
    a.array() = a.array().exp();
    out.row(r) = a / a.sum();
  }
  return out;
}

GumbelLearner::GumbelLearner(const model::ModelConfig& cfg, std::uint64_t init_seed) {
  nn::Rng rng(init_seed);
  gen_ = model::GenerativeModel(cfg, rng);
  inf_ = model::InferenceNetwork(cfg, rng);
  posterior_ = nn::Mlp("gs/posterior",
                       nn::MlpSpec::make(inf_.encoding_dim() + cfg.K, {cfg.gumbel_hidden}, cfg.K),
                       rng);
}

std::vector<nn::Parameter*> GumbelLearner::parameters() {
  return nn::concat({gen_.parameters(), inf_.parameters(), posterior_.parameters()});
}

Tensor GumbelLearner::objective(Graph& g, const std::vector<Matrix>& x, std::mt19937_64& rng,
                                double beta, double tau, StepStats& stats) {
  const int T = static_cast<int>(x.size());
  const Eigen::Index B = x.front().rows();
  const int K = config().K;
  std::vector<Matrix> z_noise = normal_noise(T, B, config().H, rng);
  std::vector<Matrix> gumbel;
  gumbel.reserve(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) gumbel.push_back(gumbel_noise(B, K, rng));
  return objective(g, x, z_noise, gumbel, beta, tau, stats);
}

Tensor GumbelLearner::objective(Graph& g, const std::vector<Matrix>& x,
                                const std::vector<Matrix>& z_noise,
                                const std::vector<Matrix>& gumbel, double beta, double tau,
                                StepStats& stats) {
  if (!(tau > 0.0)) throw nn::UsageError("Gumbel-Softmax temperature must be positive");
  const int T = static_cast<int>(x.size());
  if (T == 0) throw nn::ConfigurationError("objective needs at least one step");
  if (static_cast<int>(gumbel.size()) != T) throw nn::UsageError("gumbel noise length mismatch");
  const Eigen::Index B = x.front().rows();
  const int K = config().K;

  std::vector<Tensor> h_x = inf_.encode(g, x);
  model::PosteriorSample q = inf_.sample_posterior(g, h_x, z_noise);
  Tensor log_pi = gen_.log_initial(g);

  std::vector<Tensor> log_p_terms, log_q_terms, kl_terms;
  Tensor y_prev = g.constant(Matrix::Zero(B, K));
  for (int t = 0; t < T; ++t) {
    const auto ts = static_cast<std::size_t>(t);
    Tensor logits = posterior_.forward(g, nn::concat_cols({h_x[ts], y_prev}));
    Tensor log_q = nn::log_softmax_rows(logits);
    Tensor y = nn::softmax_rows(nn::scale(log_q + g.constant(gumbel[ts]), 1.0 / tau));

    std::vector<Tensor> per_state;
    per_state.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      per_state.push_back(t == 0 ? gen_.initial_logprob(g, q.z[0], k)
                                 : gen_.transition_logprob(g, q.z[ts], q.z[ts - 1], k));
    }
    Tensor log_z = nn::row_sum(nn::mul(y, nn::concat_cols(per_state)));
    Tensor log_s = t == 0 ? nn::row_sum(nn::mul(y, log_pi))
                          : nn::bilinear_rows(y_prev, gen_.log_transition_matrix(g, x[ts - 1], 1.0), y);
    Tensor log_x = gen_.emission_logprob(g, g.constant(x[ts]), q.z[ts]);
    log_p_terms.push_back(log_x + log_z + log_s);
    log_q_terms.push_back(nn::row_sum(nn::mul(y, log_q)));
    // KL(uniform || q) = -(1/K) Σ_k log q_k - log K
    kl_terms.push_back(nn::add_scalar(nn::row_sum(log_q) * (-1.0 / K), -std::log(static_cast<double>(K))));
    y_prev = y;
  }
  Tensor log_p = nn::row_sum(nn::concat_cols(log_p_terms));
  Tensor log_q_s = nn::row_sum(nn::concat_cols(log_q_terms));
  Tensor kl = nn::row_sum(nn::concat_cols(kl_terms));
  Tensor elbo = log_p - log_q_s + q.entropy;  // B x 1
  Tensor total = nn::sum(elbo);
  if (beta != 0.0) total = total - beta * nn::sum(kl);
  Tensor objective = total * (1.0 / (static_cast<double>(B) * T));

  const double n = static_cast<double>(B);
  stats.objective = objective.item();
  stats.nll = -log_p.value().sum() / n;
  stats.elbo = elbo.value().sum() / n;
  stats.ce = kl.value().sum() / n;
  return objective;
}

std::vector<Matrix> GumbelLearner::posterior_marginals(const std::vector<Matrix>& x) {
  Graph g;
  const int T = static_cast<int>(x.size());
  const Eigen::Index B = x.front().rows();
  const int K = config().K;
  std::vector<Tensor> h_x = inf_.encode(g, x);
  std::vector<Matrix> out(static_cast<std::size_t>(B), Matrix(T, K));
  Matrix y_prev = Matrix::Zero(B, K);
  for (int t = 0; t < T; ++t) {
    Tensor logits = posterior_.forward(g, nn::concat_cols({h_x[static_cast<std::size_t>(t)],
                                                           g.constant(y_prev)}));
    const Matrix p = nn::softmax_rows(logits).value();
    y_prev.setZero();
    for (Eigen::Index b = 0; b < B; ++b) {
      out[static_cast<std::size_t>(b)].row(t) = p.row(b);
      Eigen::Index best = 0;
      for (Eigen::Index k = 1; k < K; ++k) {
        if (p(b, k) > p(b, best)) best = k;
      }
      y_prev(b, best) = 1.0;
    }
  }
  return out;
}

}  // namespace snlds::train
