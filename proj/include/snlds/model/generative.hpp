// SPDX-License-Identifier: Apache-2.0
//
// Switching (non)linear dynamical system:
//
//   p(x_t | z_t)                 = N(x_t; f_x(z_t), diag R)
//   p(z_t | z_{t-1}, s_t = k)    = N(z_t; f_z[k](z_{t-1}), diag Q)
//   p(z_1 | s_1 = k)             = N(z_1; m_k, diag Q)
//   p(s_t | s_{t-1} = j, x_{t-1}) = softmax(f_s(x_{t-1}, j) / tau)
//   p(s_1)                       = softmax(pi_logits)
#pragma once

#include <vector>

#include "snlds/hmm/marginalizer.hpp"
#include "snlds/model/config.hpp"
#include "snlds/nn/layers.hpp"

namespace snlds::model {

using nn::Graph;
using nn::Matrix;
using nn::Parameter;
using nn::RowVector;
using nn::Tensor;

/// Per-state continuous dynamics f_z[k].
class StateTransition {
 public:
  StateTransition() = default;
  StateTransition(const std::string& name, const ModelConfig& cfg, nn::Rng& rng);

  /// z_prev: r x H  ->  predicted mean, r x H.
  Tensor forward(Graph& g, const Tensor& z_prev);
  std::vector<Parameter*> parameters();

 private:
  TransitionFamily family_ = TransitionFamily::mlp;
  nn::Mlp mlp_;         // linear and mlp families
  nn::GruCell cell_;    // gru family
  nn::Linear readout_;  // gru family
};

/// Holds θ and evaluates the conditional log-densities.
class GenerativeModel {
 public:
  GenerativeModel() = default;
  GenerativeModel(const ModelConfig& cfg, nn::Rng& rng);

  const ModelConfig& config() const { return cfg_; }

  /// log N(x; f_x(z), diag R) per row; x: r x D, z: r x H -> r x 1.
  Tensor emission_logprob(Graph& g, const Tensor& x, const Tensor& z);
  Tensor emission_mean(Graph& g, const Tensor& z);
  /// log N(z; f_z[k](z_prev), diag Q) per row -> r x 1.
  Tensor transition_logprob(Graph& g, const Tensor& z, const Tensor& z_prev, int k);
  Tensor transition_mean(Graph& g, const Tensor& z_prev, int k);
  /// log N(z_1; m_k, diag Q) per row -> r x 1.
  Tensor initial_logprob(Graph& g, const Tensor& z1, int k);
  /// Log transition matrices for a batch of previous observations.
  ///
  /// Returns r x K² (row-major K x K per row). With DiscreteInput::none the
  /// result is a single shared row.
  Tensor log_transition_matrix(Graph& g, const Matrix& x_prev, double tau);
  /// Row-stochastic K x K matrix for one previous observation.
  Matrix discrete_transition_matrix(const RowVector& x_prev, double tau);
  /// Raw transition logits (before temperature), K x K.
  Matrix discrete_transition_logits(const RowVector& x_prev);
  /// log π, 1 x K.
  Tensor log_initial(Graph& g);

  /// Potentials of the discrete chain given observations and a continuous
  /// trajectory, both time-major (T entries of r x D and r x H).
  hmm::PotentialTensors build_potentials(Graph& g, const std::vector<Matrix>& x,
                                         const std::vector<Tensor>& z, double tau);

  std::vector<Parameter*> parameters();
  /// Parameters of f_z[k] only.
  std::vector<Parameter*> transition_parameters(int k);
  Parameter& emission_log_scale() { return emission_log_scale_; }
  Parameter& transition_log_scale() { return transition_log_scale_; }
  Parameter& initial_mean() { return initial_mean_; }
  Parameter& initial_logits() { return initial_logits_; }
  /// K x K logits table used when DiscreteInput::none.
  Parameter& transition_table() { return transition_table_; }
  nn::Mlp& emission_net() { return emission_; }
  nn::Mlp& discrete_net() { return discrete_; }

 private:
  Tensor discrete_logits(Graph& g, const Matrix& x_prev);
  void check_state(int k) const;

  ModelConfig cfg_;
  nn::Mlp emission_;
  Parameter emission_log_scale_;  // 1 x D, log sqrt(diag R)
  std::vector<StateTransition> transitions_;
  Parameter transition_log_scale_;  // 1 x H, log sqrt(diag Q)
  nn::Mlp discrete_;
  Parameter transition_table_;  // K x K
  Parameter initial_mean_;      // K x H
  Parameter initial_logits_;    // 1 x K
};

}  // namespace snlds::model
