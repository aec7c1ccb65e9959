// SPDX-License-Identifier: Apache-2.0
#include "snlds/model/inference.hpp"

namespace snlds::model {

using nn::ConfigurationError;
using nn::UsageError;

InferenceNetwork::InferenceNetwork(const ModelConfig& cfg, nn::Rng& rng)
    : cfg_(cfg),
      encoder_("inf/encoder", cfg.D, cfg.encoder_dim, rng),
      causal_("inf/causal", 2 * cfg.encoder_dim + cfg.H, cfg.posterior_dim, rng),
      head_("inf/head", cfg.posterior_dim, cfg.H, rng) {
  cfg_.validate();
}

std::vector<Tensor> InferenceNetwork::encode(Graph& g, const std::vector<Matrix>& x) {
  if (x.empty()) throw ConfigurationError("encode needs at least one step");
  std::vector<Tensor> inputs;
  inputs.reserve(x.size());
  for (const Matrix& xt : x) {
    if (xt.cols() != cfg_.D) {
      throw ConfigurationError("observation width " + std::to_string(xt.cols()) + " != D = " +
                               std::to_string(cfg_.D));
    }
    inputs.push_back(g.constant((xt.array() - cfg_.input_shift) / cfg_.input_scale));
  }
  return encoder_.forward(g, inputs);
}

PosteriorSample InferenceNetwork::sample_posterior(Graph& g, const std::vector<Tensor>& h_x,
                                                   const std::vector<Matrix>& noise) {
  const std::size_t T = h_x.size();
  if (T == 0) throw ConfigurationError("sample_posterior needs at least one step");
  if (noise.size() != T) throw UsageError("noise length does not match the sequence");
  const Eigen::Index rows = h_x.front().rows();
  for (const Matrix& e : noise) {
    if (e.rows() != rows || e.cols() != cfg_.H) {
      throw UsageError("noise block must be " + std::to_string(rows) + "x" +
                       std::to_string(cfg_.H));
    }
    if (!e.allFinite()) throw UsageError("noise contains non-finite draws");
  }

  PosteriorSample out;
  out.z.reserve(T);
  out.mean.reserve(T);
  out.log_scale.reserve(T);
  Tensor z_prev = g.constant(Matrix::Zero(rows, cfg_.H));
  Tensor h = g.constant(Matrix::Zero(rows, cfg_.posterior_dim));
  std::vector<Tensor> log_q_terms, entropy_terms;
  for (std::size_t t = 0; t < T; ++t) {
    h = causal_.step(g, nn::concat_cols({h_x[t], z_prev}), h);
    nn::GaussianParams q = head_.forward(g, h);
    Tensor z = q.mean + nn::mul(nn::exp(q.log_scale), g.constant(noise[t]));
    log_q_terms.push_back(nn::gaussian_log_prob(z, q.mean, q.log_scale));
    entropy_terms.push_back(nn::gaussian_entropy(q.log_scale));
    out.z.push_back(z);
    out.mean.push_back(q.mean);
    out.log_scale.push_back(q.log_scale);
    z_prev = z;
  }
  out.log_q = nn::row_sum(nn::concat_cols(log_q_terms));
  out.entropy = nn::row_sum(nn::concat_cols(entropy_terms));
  return out;
}

std::vector<Parameter*> InferenceNetwork::parameters() {
  return nn::concat({encoder_.parameters(), causal_.parameters(), head_.parameters()});
}

}  // namespace snlds::model
