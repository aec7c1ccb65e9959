// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "snlds/nn/tensor.hpp"

namespace snlds::nn {

using Rng = std::mt19937_64;

enum class Activation { identity, relu, tanh };

Activation parse_activation(const std::string& name);
std::string to_string(Activation a);

/// Fully connected stack. `widths` lists the input width followed by every
/// layer's output width; `activations` has one entry per layer.
struct MlpSpec {
  std::vector<int> widths;
  std::vector<Activation> activations;

  /// Hidden layers share `hidden`; the output layer uses `output`.
  static MlpSpec make(int in, const std::vector<int>& hidden, int out,
                      Activation hidden_act = Activation::relu,
                      Activation output = Activation::identity);

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  std::size_t layers() const { return activations.size(); }
  /// Throws ConfigurationError on malformed specs.
  void validate() const;
};

/// Weights are Glorot-uniform, biases zero.
Matrix glorot_uniform(int fan_in, int fan_out, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(const std::string& name, int in, int out, Rng& rng);

  /// x: r x in  ->  r x out.
  Tensor forward(Graph& g, const Tensor& x);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }

  int in_dim() const { return static_cast<int>(weight_.value().rows()); }
  int out_dim() const { return static_cast<int>(weight_.value().cols()); }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_;  // in x out
  Parameter bias_;    // 1 x out
};

class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, MlpSpec spec, Rng& rng);

  Tensor forward(Graph& g, const Tensor& x);
  std::vector<Parameter*> parameters();
  const MlpSpec& spec() const { return spec_; }
  std::vector<Linear>& layers() { return layers_; }

 private:
  MlpSpec spec_;
  std::vector<Linear> layers_;
};

/// Standard gated recurrent unit.
///
///   r  = σ(x Wr + br + h Ur + cr)
///   u  = σ(x Wu + bu + h Uu + cu)
///   n  = tanh(x Wn + bn + r ⊙ (h Un + cn))
///   h' = (1 - u) ⊙ h + u ⊙ n
///
/// Gate blocks are stored side by side in the order [r, u, n].
class GruCell {
 public:
  GruCell() = default;
  GruCell(const std::string& name, int input_dim, int hidden_dim, Rng& rng);

  /// x: r x input_dim, h: r x hidden_dim  ->  r x hidden_dim.
  Tensor step(Graph& g, const Tensor& x, const Tensor& h);
  std::vector<Parameter*> parameters() {
    return {&input_weight_, &hidden_weight_, &input_bias_, &hidden_bias_};
  }

  int input_dim() const { return static_cast<int>(input_weight_.value().rows()); }
  int hidden_dim() const { return static_cast<int>(hidden_weight_.value().rows()); }
  Parameter& input_weight() { return input_weight_; }
  Parameter& hidden_weight() { return hidden_weight_; }
  Parameter& input_bias() { return input_bias_; }
  Parameter& hidden_bias() { return hidden_bias_; }

 private:
  Parameter input_weight_;   // input x 3H
  Parameter hidden_weight_;  // H x 3H
  Parameter input_bias_;     // 1 x 3H
  Parameter hidden_bias_;    // 1 x 3H
};

/// Output of a diagonal-Gaussian head.
struct GaussianParams {
  Tensor mean;
  Tensor log_scale;
};

/// Linear map to the mean and log-scale of a diagonal Gaussian.
class GaussianHead {
 public:
  GaussianHead() = default;
  GaussianHead(const std::string& name, int in, int out, Rng& rng);

  GaussianParams forward(Graph& g, const Tensor& h);
  std::vector<Parameter*> parameters() { return linear_.parameters(); }
  int out_dim() const { return linear_.out_dim() / 2; }

 private:
  Linear linear_;
};

/// Runs a GRU over a sequence in both directions and concatenates the
/// states, so step t sees the whole sequence.
class BidirectionalEncoder {
 public:
  BidirectionalEncoder() = default;
  BidirectionalEncoder(const std::string& name, int input_dim, int hidden_dim, Rng& rng);

  /// `inputs` holds one r x input_dim block per time step.
  std::vector<Tensor> forward(Graph& g, const std::vector<Tensor>& inputs);
  std::vector<Parameter*> parameters();
  int output_dim() const { return 2 * forward_.hidden_dim(); }

 private:
  GruCell forward_;
  GruCell backward_;
};

std::vector<Parameter*> concat(std::initializer_list<std::vector<Parameter*>> groups);

}  // namespace snlds::nn
