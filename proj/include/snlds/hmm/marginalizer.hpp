// SPDX-License-Identifier: Apache-2.0
//
// Exact marginalisation of the discrete switching states.
//
// Conventions used throughout: time is 0-based, so step t = 0 is the first
// frame. Transition blocks are stored for t = 1..T-1 at index t-1, and
// entry (j, k) is the log-probability of moving from state j at t-1 to
// state k at t. Pairwise marginals use the same indexing.
#pragma once

#include <vector>

#include "snlds/nn/tensor.hpp"

namespace snlds::hmm {

using nn::Matrix;
using nn::RowVector;
using nn::Tensor;

/// Per-sequence HMM potentials in log space.
struct LogPotentials {
  std::vector<Matrix> log_A;  // T-1 blocks of K x K
  Matrix log_B;               // T x K, soft evidence (need not normalise over k)
  RowVector log_pi;           // K

  int steps() const { return static_cast<int>(log_B.rows()); }
  int states() const { return static_cast<int>(log_B.cols()); }
  /// Checks shapes, finiteness and row normalisation of A and π.
  /// Throws nn::ConfigurationError / nn::NumericError.
  void validate(double tolerance = 1e-10) const;
};

/// Smoothed marginals and the log-normaliser of one sequence.
struct DiscretePosterior {
  Matrix gamma1;               // T x K, p(s_t = k | evidence)
  std::vector<Matrix> gamma2;  // T-1 blocks, [t-1](j, k) = p(s_{t-1} = j, s_t = k | evidence)
  double log_Z = 0.0;          // log Σ_s p(s, evidence)
};

/// Log-space forward-backward. Requires T >= 1 and K >= 1.
DiscretePosterior forward_backward(const LogPotentials& pot);

/// Graph-resident potentials for a batch of equal-length sequences.
///
/// Each log_B entry is B x K; each log_A entry is B x K² (row-major K x K
/// per sequence) or 1 x K² when shared by the batch; log_pi is 1 x K.
struct PotentialTensors {
  std::vector<Tensor> log_B;
  std::vector<Tensor> log_A;
  Tensor log_pi;

  int steps() const { return static_cast<int>(log_B.size()); }
  int states() const { return static_cast<int>(log_pi.cols()); }
  int batch() const { return static_cast<int>(log_B.front().rows()); }
  /// Plain values for sequence `b` of the batch.
  LogPotentials values(int b) const;
};

/// Collapsed-gradient surrogate summed over the batch:
///
///   Σ_t Σ_{j,k} γ²_t(j,k) [log B_t(k) + log A_t(j,k)] + Σ_k γ¹_1(k) [log B_1(k) + log π(k)]
///
/// The posteriors enter as constants, so the gradient equals ∇ log Z.
Tensor surrogate_loss(const PotentialTensors& pot, const std::vector<DiscretePosterior>& post);

/// Differentiable forward-backward on the tape.
struct MarginalTensors {
  std::vector<Tensor> log_gamma1;  // T entries of B x K
  Tensor log_Z;                    // B x 1
};
MarginalTensors forward_backward(const PotentialTensors& pot);

/// Σ_t KL(uniform(K) || γ¹_t) with γ¹ clamped below at `floor`.
double posterior_uniform_kl(const Matrix& gamma1, double floor = 1e-12);
/// Tape version over log-marginals; returns B x 1.
Tensor posterior_uniform_kl(const std::vector<Tensor>& log_gamma1, double floor = 1e-12);

/// Row-wise softmax(logits / tau). Throws nn::UsageError for tau <= 0.
Matrix apply_temperature(const Matrix& logits, double tau);
/// log of apply_temperature, on the tape. Rows of `logits` are independent.
Tensor tempered_log_softmax(const Tensor& logits, double tau);

}  // namespace snlds::hmm
