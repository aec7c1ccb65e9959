// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "snlds/model/config.hpp"
#include "snlds/nn/layers.hpp"

namespace snlds::model {

using nn::Graph;
using nn::Matrix;
using nn::Parameter;
using nn::Tensor;

/// One reparameterised draw from q(z_{1:T} | x_{1:T}), batched by row.
struct PosteriorSample {
  std::vector<Tensor> z;          // T entries, r x H
  std::vector<Tensor> mean;       // T entries, r x H
  std::vector<Tensor> log_scale;  // T entries, r x H
  Tensor log_q;                   // r x 1, Σ_t log q(z̃_t | h^z_t)
  Tensor entropy;                 // r x 1, Σ_t H(q(z_t | h^z_t))
};

/// Amortised posterior over the continuous states.
///
/// A bidirectional GRU summarises x_{1:T} into h^x_t. A causal GRU then
/// consumes (h^x_t, z̃_{t-1}) to give h^z_t, from which a Gaussian head emits
/// the mean and log-scale of q(z_t | h^z_t). z̃_0 and h^z_0 are zero.
class InferenceNetwork {
 public:
  InferenceNetwork() = default;
  InferenceNetwork(const ModelConfig& cfg, nn::Rng& rng);

  /// x: T entries of r x D  ->  T entries of r x (2 * encoder_dim).
  std::vector<Tensor> encode(Graph& g, const std::vector<Matrix>& x);
  /// `noise` holds T blocks of r x H standard-normal draws.
  PosteriorSample sample_posterior(Graph& g, const std::vector<Tensor>& h_x,
                                   const std::vector<Matrix>& noise);

  std::vector<Parameter*> parameters();
  int encoding_dim() const { return encoder_.output_dim(); }

 private:
  ModelConfig cfg_;
  nn::BidirectionalEncoder encoder_;
  nn::GruCell causal_;
  nn::GaussianHead head_;
};

}  // namespace snlds::model
