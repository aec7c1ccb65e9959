// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "snlds/train/learner.hpp"

namespace snlds::train {

/// Standard Gumbel(0, 1) draws, rows x cols.
Matrix gumbel_noise(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

/// Relaxed one-hot sample softmax((log_softmax(logits) + gumbel) / tau), row-wise.
Matrix gumbel_softmax_sample(const Matrix& logits, double tau, std::mt19937_64& rng);

/// SNLDS with an explicit relaxed posterior over the discrete states.
///
/// A feed-forward net g maps (h^x_t, y_{t-1}) to logits of q(s_t | ·); y_t is
/// a Gumbel-Softmax sample at the annealed temperature and y_0 is zero.
/// Every term of log p(x, z, s) that indexes a state is replaced by its
/// y-weighted average, and log q(s_t) by Σ_k y_tk log q_k.
class GumbelLearner final : public Learner {
 public:
  GumbelLearner(const model::ModelConfig& cfg, std::uint64_t init_seed);

  std::string kind() const override { return "gumbel"; }
  const model::ModelConfig& config() const override { return gen_.config(); }
  std::vector<nn::Parameter*> parameters() override;
  model::GenerativeModel& generative() override { return gen_; }

  Tensor objective(Graph& g, const std::vector<Matrix>& x, std::mt19937_64& rng, double beta,
                   double tau, StepStats& stats) override;

  /// Same objective with externally supplied noise (T blocks each).
  Tensor objective(Graph& g, const std::vector<Matrix>& x, const std::vector<Matrix>& z_noise,
                   const std::vector<Matrix>& gumbel, double beta, double tau, StepStats& stats);

  /// q(s_t) along the greedy path, with y_{t-1} the one-hot of the previous argmax.
  std::vector<Matrix> posterior_marginals(const std::vector<Matrix>& x) override;

 private:
  model::GenerativeModel gen_;
  model::InferenceNetwork inf_;
  nn::Mlp posterior_;
};

}  // namespace snlds::train
