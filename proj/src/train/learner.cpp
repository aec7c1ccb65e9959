// SPDX-License-Identifier: Apache-2.0
#include "snlds/train/learner.hpp"

#include "snlds/train/gumbel.hpp"

namespace snlds::train {

std::vector<Matrix> normal_noise(int T, Eigen::Index rows, int H, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Matrix> out(static_cast<std::size_t>(T), Matrix(rows, H));
  for (Matrix& m : out) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  }
  return out;
}

SnldsLearner::SnldsLearner(const model::ModelConfig& cfg, std::uint64_t init_seed,
                           EntropyMode entropy)
    : entropy_(entropy) {
  nn::Rng rng(init_seed);
  gen_ = model::GenerativeModel(cfg, rng);
  inf_ = model::InferenceNetwork(cfg, rng);
}

std::vector<nn::Parameter*> SnldsLearner::parameters() {
  return nn::concat({gen_.parameters(), inf_.parameters()});
}

Tensor SnldsLearner::objective(Graph& g, const std::vector<Matrix>& x, std::mt19937_64& rng,
                               double beta, double tau, StepStats& stats) {
  const int T = static_cast<int>(x.size());
  const Eigen::Index B = x.front().rows();
  std::vector<Matrix> noise = normal_noise(T, B, config().H, rng);
  ElboTerms terms = elbo_terms(g, gen_, inf_, x, noise, tau, beta, entropy_);
  double log_z = 0.0, elbo = 0.0;
  for (std::size_t b = 0; b < terms.log_Z.size(); ++b) {
    log_z += terms.log_Z[b];
    elbo += terms.log_Z[b] + terms.entropy_per_seq[b];
  }
  const double n = static_cast<double>(B);
  stats.objective = terms.objective.item();
  stats.nll = -log_z / n;
  stats.elbo = elbo / n;
  stats.ce = terms.ce.item() / n;
  return terms.objective;
}

std::vector<Matrix> SnldsLearner::posterior_marginals(const std::vector<Matrix>& x) {
  Graph g;
  const int T = static_cast<int>(x.size());
  const Eigen::Index B = x.front().rows();
  std::vector<Matrix> zero(static_cast<std::size_t>(T), Matrix::Zero(B, config().H));
  std::vector<Tensor> h_x = inf_.encode(g, x);
  model::PosteriorSample q = inf_.sample_posterior(g, h_x, zero);
  hmm::PotentialTensors pot = gen_.build_potentials(g, x, q.z, 1.0);
  std::vector<Matrix> out;
  out.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < static_cast<int>(B); ++b) {
    out.push_back(hmm::forward_backward(pot.values(b)).gamma1);
  }
  return out;
}

std::unique_ptr<Learner> make_learner(const std::string& kind, const model::ModelConfig& cfg,
                                      std::uint64_t init_seed, EntropyMode entropy) {
  if (kind == "snlds") return std::make_unique<SnldsLearner>(cfg, init_seed, entropy);
  if (kind == "gumbel") return std::make_unique<GumbelLearner>(cfg, init_seed);
  throw nn::ConfigurationError("unknown model kind '" + kind + "' (snlds, gumbel)");
}

}  // namespace snlds::train
