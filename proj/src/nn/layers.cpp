// SPDX-License-Identifier: Apache-2.0
#include "snlds/nn/layers.hpp"

#include <cmath>

namespace snlds::nn {

Activation parse_activation(const std::string& name) {
  if (name == "identity" || name == "linear") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  throw ConfigurationError("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
  }
  return "identity";
}

MlpSpec MlpSpec::make(int in, const std::vector<int>& hidden, int out, Activation hidden_act,
                      Activation output) {
  MlpSpec s;
  s.widths.push_back(in);
  for (int h : hidden) {
    s.widths.push_back(h);
    s.activations.push_back(hidden_act);
  }
  s.widths.push_back(out);
  s.activations.push_back(output);
  return s;
}

void MlpSpec::validate() const {
  if (widths.size() < 2) throw ConfigurationError("MLP needs at least one layer");
  if (activations.size() + 1 != widths.size()) {
    throw ConfigurationError("MLP activation count must equal layer count");
  }
  for (int w : widths) {
    if (w <= 0) throw ConfigurationError("MLP widths must be positive");
  }
}

Matrix glorot_uniform(int fan_in, int fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix w(fan_in, fan_out);
  for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
  return w;
}

// Linear ----------------------------------------------------------------

Linear::Linear(const std::string& name, int in, int out, Rng& rng)
    : weight_(name + "/weight", glorot_uniform(in, out, rng)),
      bias_(name + "/bias", Matrix::Zero(1, out)) {}

Tensor Linear::forward(Graph& g, const Tensor& x) {
  if (x.cols() != in_dim()) {
    throw ConfigurationError("linear layer '" + weight_.name() + "' expects input width " +
                             std::to_string(in_dim()) + ", got " + std::to_string(x.cols()));
  }
  return affine(x, g.param(weight_), g.param(bias_));
}

// Mlp -------------------------------------------------------------------

Mlp::Mlp(const std::string& name, MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
  spec_.validate();
  for (std::size_t i = 0; i < spec_.layers(); ++i) {
    layers_.emplace_back(name + "/layer" + std::to_string(i), spec_.widths[i],
                         spec_.widths[i + 1], rng);
  }
}

Tensor Mlp::forward(Graph& g, const Tensor& x) {
  if (x.cols() != spec_.input_dim()) {
    throw ConfigurationError("MLP expects input width " + std::to_string(spec_.input_dim()) +
                             ", got " + std::to_string(x.cols()));
  }
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(g, h);
    switch (spec_.activations[i]) {
      case Activation::identity: break;
      case Activation::relu: h = relu(h); break;
      case Activation::tanh: h = tanh(h); break;
    }
  }
  return h;
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    for (Parameter* p : l.parameters()) out.push_back(p);
  }
  return out;
}

// GruCell ---------------------------------------------------------------

GruCell::GruCell(const std::string& name, int input_dim, int hidden_dim, Rng& rng)
    : input_weight_(name + "/input_weight", Matrix(input_dim, 3 * hidden_dim)),
      hidden_weight_(name + "/hidden_weight", Matrix(hidden_dim, 3 * hidden_dim)),
      input_bias_(name + "/input_bias", Matrix::Zero(1, 3 * hidden_dim)),
      hidden_bias_(name + "/hidden_bias", Matrix::Zero(1, 3 * hidden_dim)) {
  if (input_dim <= 0 || hidden_dim <= 0) {
    throw ConfigurationError("GRU dimensions must be positive");
  }
  // Each gate block is initialised as its own linear map.
  for (int gate = 0; gate < 3; ++gate) {
    input_weight_.value().middleCols(gate * hidden_dim, hidden_dim) =
        glorot_uniform(input_dim, hidden_dim, rng);
    hidden_weight_.value().middleCols(gate * hidden_dim, hidden_dim) =
        glorot_uniform(hidden_dim, hidden_dim, rng);
  }
}

Tensor GruCell::step(Graph& g, const Tensor& x, const Tensor& h) {
  const int H = hidden_dim();
  if (x.cols() != input_dim() || h.cols() != H) {
    throw ConfigurationError("GRU '" + input_weight_.name() + "' expects (" +
                             std::to_string(input_dim()) + ", " + std::to_string(H) +
                             ") input/state widths, got (" + std::to_string(x.cols()) + ", " +
                             std::to_string(h.cols()) + ")");
  }
  return gru_cell(x, h, g.param(input_weight_), g.param(hidden_weight_), g.param(input_bias_),
                  g.param(hidden_bias_));
}

// GaussianHead ----------------------------------------------------------

GaussianHead::GaussianHead(const std::string& name, int in, int out, Rng& rng)
    : linear_(name, in, 2 * out, rng) {}

GaussianParams GaussianHead::forward(Graph& g, const Tensor& h) {
  Tensor y = linear_.forward(g, h);
  const int d = out_dim();
  return {slice_cols(y, 0, d), slice_cols(y, d, d)};
}

// BidirectionalEncoder --------------------------------------------------

BidirectionalEncoder::BidirectionalEncoder(const std::string& name, int input_dim,
                                           int hidden_dim, Rng& rng)
    : forward_(name + "/forward", input_dim, hidden_dim, rng),
      backward_(name + "/backward", input_dim, hidden_dim, rng) {}

std::vector<Tensor> BidirectionalEncoder::forward(Graph& g, const std::vector<Tensor>& inputs) {
  const std::size_t T = inputs.size();
  if (T == 0) return {};
  const Eigen::Index rows = inputs.front().rows();
  const int H = forward_.hidden_dim();
  std::vector<Tensor> fwd(T), bwd(T);
  Tensor h = g.constant(Matrix::Zero(rows, H));
  for (std::size_t t = 0; t < T; ++t) {
    h = forward_.step(g, inputs[t], h);
    fwd[t] = h;
  }
  h = g.constant(Matrix::Zero(rows, H));
  for (std::size_t t = T; t-- > 0;) {
    h = backward_.step(g, inputs[t], h);
    bwd[t] = h;
  }
  std::vector<Tensor> out(T);
  for (std::size_t t = 0; t < T; ++t) out[t] = concat_cols({fwd[t], bwd[t]});
  return out;
}

std::vector<Parameter*> BidirectionalEncoder::parameters() {
  return concat({forward_.parameters(), backward_.parameters()});
}

std::vector<Parameter*> concat(std::initializer_list<std::vector<Parameter*>> groups) {
  std::vector<Parameter*> out;
  for (const auto& g : groups) out.insert(out.end(), g.begin(), g.end());
  return out;
}

}  // namespace snlds::nn
