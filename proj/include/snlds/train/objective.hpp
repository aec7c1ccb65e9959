// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "snlds/hmm/marginalizer.hpp"
#include "snlds/model/generative.hpp"
#include "snlds/model/inference.hpp"

namespace snlds::train {

using nn::Graph;
using nn::Matrix;
using nn::Tensor;

/// Analytic per-step Gaussian entropy, or -log q of the drawn sample.
enum class EntropyMode { analytic, sample };
EntropyMode parse_entropy_mode(const std::string& s);
std::string to_string(EntropyMode m);

/// Pieces of the regularised ELBO for one batch. Sums run over the batch.
struct ElboTerms {
  Tensor objective;  // scalar (surrogate + entropy - beta * ce) / (B * T), maximised
  Tensor surrogate;  // scalar E_γ[log p(x, z̃, s)]; its gradient is that of Σ log_Z
  Tensor entropy;    // scalar
  Tensor ce;         // scalar, a constant when beta == 0
  std::vector<double> log_Z;          // log p(x, z̃) per sequence
  std::vector<double> entropy_per_seq;
  std::vector<hmm::DiscretePosterior> posteriors;
};

/// x: T blocks of B x D; noise: T blocks of B x H standard normals.
///
/// The cross-entropy term only carries gradient when beta != 0, in which
/// case the forward-backward recursion is also recorded on the tape.
ElboTerms elbo_terms(Graph& g, model::GenerativeModel& gen, model::InferenceNetwork& inf,
                     const std::vector<Matrix>& x, const std::vector<Matrix>& noise, double tau,
                     double beta, EntropyMode entropy = EntropyMode::analytic);

}  // namespace snlds::train
