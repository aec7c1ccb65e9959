// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace snlds::model {

/// Family of the per-state continuous dynamics f_z.
enum class TransitionFamily {
  linear,  // affine map per state (switching linear dynamics)
  mlp,     // per-state multilayer perceptron
  gru,     // per-state GRU cell followed by a linear read-out
};

/// What the discrete transition network sees besides the previous state.
enum class DiscreteInput {
  prev_observation,  // logits depend on x_{t-1}
  none,              // plain HMM transition table
};

TransitionFamily parse_transition_family(const std::string& s);
DiscreteInput parse_discrete_input(const std::string& s);
std::string to_string(TransitionFamily f);
std::string to_string(DiscreteInput d);

/// Shapes of every network in the generative model and its inference network.
struct ModelConfig {
  int K = 3;  // discrete states
  int H = 4;  // continuous latent dimension
  int D = 1;  // observation dimension
  TransitionFamily transition_family = TransitionFamily::mlp;
  DiscreteInput discrete_input = DiscreteInput::prev_observation;

  std::vector<int> emission_hidden = {32};
  std::vector<int> transition_hidden = {32};
  std::vector<int> discrete_hidden = {16};

  int encoder_dim = 16;    // per direction of the bidirectional RNN
  int posterior_dim = 16;  // causal RNN over (h^x_t, z_{t-1})
  /// Hidden width of the relaxed-categorical posterior head (Gumbel-Softmax model).
  int gumbel_hidden = 32;

  /// Observation normalisation: networks see (x - shift) / scale, and the
  /// emission mean is mapped back as shift + scale * f_x(z).
  double input_shift = 0.0;
  double input_scale = 1.0;

  /// Throws nn::ConfigurationError when a field is out of range.
  void validate() const;
};

}  // namespace snlds::model
