// SPDX-License-Identifier: Apache-2.0
#include "snlds/model/generative.hpp"

#include <string>

namespace snlds::model {

using nn::ConfigurationError;
using nn::UsageError;

// Config -----------------------------------------------------------------

TransitionFamily parse_transition_family(const std::string& s) {
  if (s == "linear") return TransitionFamily::linear;
  if (s == "mlp") return TransitionFamily::mlp;
  if (s == "gru") return TransitionFamily::gru;
  throw ConfigurationError("unknown transition family '" + s + "' (linear, mlp, gru)");
}

DiscreteInput parse_discrete_input(const std::string& s) {
  if (s == "prev_observation") return DiscreteInput::prev_observation;
  if (s == "none") return DiscreteInput::none;
  throw ConfigurationError("unknown discrete input '" + s + "' (prev_observation, none)");
}

std::string to_string(TransitionFamily f) {
  switch (f) {
    case TransitionFamily::linear: return "linear";
    case TransitionFamily::mlp: return "mlp";
    case TransitionFamily::gru: return "gru";
  }
  return "mlp";
}

std::string to_string(DiscreteInput d) {
  return d == DiscreteInput::none ? "none" : "prev_observation";
}

void ModelConfig::validate() const {
  if (K < 1) throw ConfigurationError("K must be at least 1");
  if (H < 1) throw ConfigurationError("H must be at least 1");
  if (D < 1) throw ConfigurationError("D must be at least 1");
  auto positive = [](const std::vector<int>& v, const char* what) {
    for (int w : v) {
      if (w <= 0) throw ConfigurationError(std::string(what) + " widths must be positive");
    }
  };
  positive(emission_hidden, "emission");
  positive(transition_hidden, "transition");
  positive(discrete_hidden, "discrete");
  if (encoder_dim < 1 || posterior_dim < 1) {
    throw ConfigurationError("inference RNN widths must be positive");
  }
  if (gumbel_hidden < 1) throw ConfigurationError("gumbel_hidden must be positive");
  if (!(input_scale > 0.0)) throw ConfigurationError("input_scale must be positive");
}

// StateTransition --------------------------------------------------------

StateTransition::StateTransition(const std::string& name, const ModelConfig& cfg, nn::Rng& rng)
    : family_(cfg.transition_family) {
  switch (family_) {
    case TransitionFamily::linear:
      mlp_ = nn::Mlp(name, nn::MlpSpec::make(cfg.H, {}, cfg.H), rng);
      break;
    case TransitionFamily::mlp:
      mlp_ = nn::Mlp(name, nn::MlpSpec::make(cfg.H, cfg.transition_hidden, cfg.H), rng);
      break;
    case TransitionFamily::gru:
      cell_ = nn::GruCell(name + "/cell", cfg.H, cfg.H, rng);
      readout_ = nn::Linear(name + "/readout", cfg.H, cfg.H, rng);
      break;
  }
}

Tensor StateTransition::forward(Graph& g, const Tensor& z_prev) {
  if (family_ != TransitionFamily::gru) return mlp_.forward(g, z_prev);
  // z_{t-1} is both the input and the carried state, so a closed update gate is the identity.
  return readout_.forward(g, cell_.step(g, z_prev, z_prev));
}

std::vector<Parameter*> StateTransition::parameters() {
  if (family_ != TransitionFamily::gru) return mlp_.parameters();
  return nn::concat({cell_.parameters(), readout_.parameters()});
}

// GenerativeModel --------------------------------------------------------

GenerativeModel::GenerativeModel(const ModelConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  emission_ = nn::Mlp("gen/emission", nn::MlpSpec::make(cfg.H, cfg.emission_hidden, cfg.D), rng);
  emission_log_scale_ = Parameter("gen/emission_log_scale", Matrix::Zero(1, cfg.D));
  for (int k = 0; k < cfg.K; ++k) {
    transitions_.emplace_back("gen/transition" + std::to_string(k), cfg_, rng);
  }
  transition_log_scale_ = Parameter("gen/transition_log_scale", Matrix::Zero(1, cfg.H));
  if (cfg.discrete_input == DiscreteInput::prev_observation) {
    discrete_ = nn::Mlp("gen/discrete",
                        nn::MlpSpec::make(cfg.D + cfg.K, cfg.discrete_hidden, cfg.K), rng);
  } else {
    transition_table_ = Parameter("gen/transition_table", Matrix::Zero(cfg.K, cfg.K));
  }
  initial_mean_ = Parameter("gen/initial_mean", Matrix::Zero(cfg.K, cfg.H));
  initial_logits_ = Parameter("gen/initial_logits", Matrix::Zero(1, cfg.K));
}

void GenerativeModel::check_state(int k) const {
  if (k < 0 || k >= cfg_.K) {
    throw UsageError("state index " + std::to_string(k) + " out of range [0, " +
                     std::to_string(cfg_.K) + ")");
  }
}

Tensor GenerativeModel::emission_mean(Graph& g, const Tensor& z) {
  Tensor y = emission_.forward(g, z);
  if (cfg_.input_scale == 1.0 && cfg_.input_shift == 0.0) return y;
  // The network works in normalised units; map back to observation units.
  return nn::add_scalar(nn::scale(y, cfg_.input_scale), cfg_.input_shift);
}

Tensor GenerativeModel::emission_logprob(Graph& g, const Tensor& x, const Tensor& z) {
  if (x.cols() != cfg_.D) {
    throw ConfigurationError("observation width " + std::to_string(x.cols()) + " != D = " +
                             std::to_string(cfg_.D));
  }
  return nn::gaussian_log_prob(x, emission_mean(g, z), g.param(emission_log_scale_));
}

Tensor GenerativeModel::transition_mean(Graph& g, const Tensor& z_prev, int k) {
  check_state(k);
  return transitions_[static_cast<std::size_t>(k)].forward(g, z_prev);
}

Tensor GenerativeModel::transition_logprob(Graph& g, const Tensor& z, const Tensor& z_prev, int k) {
  return nn::gaussian_log_prob(z, transition_mean(g, z_prev, k), g.param(transition_log_scale_));
}

Tensor GenerativeModel::initial_logprob(Graph& g, const Tensor& z1, int k) {
  check_state(k);
  Tensor mean = nn::slice_rows(g.param(initial_mean_), k, 1);
  return nn::gaussian_log_prob(z1, mean, g.param(transition_log_scale_));
}

Tensor GenerativeModel::discrete_logits(Graph& g, const Matrix& x_prev) {
  const int K = cfg_.K;
  if (cfg_.discrete_input == DiscreteInput::none) return g.param(transition_table_);
  if (x_prev.cols() != cfg_.D) {
    throw ConfigurationError("previous observation width " + std::to_string(x_prev.cols()) +
                             " != D = " + std::to_string(cfg_.D));
  }
  // One row per (sequence, previous state) pair: [normalised x_{t-1}, onehot(j)].
  const Eigen::Index rows = x_prev.rows();
  Matrix input = Matrix::Zero(rows * K, cfg_.D + K);
  for (Eigen::Index b = 0; b < rows; ++b) {
    for (int j = 0; j < K; ++j) {
      input.row(b * K + j).head(cfg_.D) =
          (x_prev.row(b).array() - cfg_.input_shift) / cfg_.input_scale;
      input(b * K + j, cfg_.D + j) = 1.0;
    }
  }
  return discrete_.forward(g, g.constant(std::move(input)));
}

Tensor GenerativeModel::log_transition_matrix(Graph& g, const Matrix& x_prev, double tau) {
  const int K = cfg_.K;
  Tensor logp = hmm::tempered_log_softmax(discrete_logits(g, x_prev), tau);
  const Eigen::Index rows = logp.rows() / K;
  return nn::reshape(logp, rows, static_cast<Eigen::Index>(K) * K);
}

Matrix GenerativeModel::discrete_transition_logits(const RowVector& x_prev) {
  Graph g;
  Matrix x = x_prev;
  return discrete_logits(g, x).value();
}

Matrix GenerativeModel::discrete_transition_matrix(const RowVector& x_prev, double tau) {
  return hmm::apply_temperature(discrete_transition_logits(x_prev), tau);
}

Tensor GenerativeModel::log_initial(Graph& g) {
  return nn::log_softmax_rows(g.param(initial_logits_));
}

hmm::PotentialTensors GenerativeModel::build_potentials(Graph& g, const std::vector<Matrix>& x,
                                                        const std::vector<Tensor>& z, double tau) {
  const std::size_t T = x.size();
  if (T == 0) throw ConfigurationError("build_potentials needs at least one step");
  if (z.size() != T) throw ConfigurationError("observation and latent sequences differ in length");
  const int K = cfg_.K;
  hmm::PotentialTensors pot;
  pot.log_pi = log_initial(g);
  pot.log_B.reserve(T);
  pot.log_A.reserve(T - 1);
  for (std::size_t t = 0; t < T; ++t) {
    Tensor xt = g.constant(x[t]);
    Tensor emit = emission_logprob(g, xt, z[t]);
    std::vector<Tensor> per_state;
    per_state.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      per_state.push_back(t == 0 ? initial_logprob(g, z[0], k)
                                 : transition_logprob(g, z[t], z[t - 1], k));
    }
    pot.log_B.push_back(nn::add_col(nn::concat_cols(per_state), emit));
    if (t > 0) pot.log_A.push_back(log_transition_matrix(g, x[t - 1], tau));
  }
  return pot;
}

std::vector<Parameter*> GenerativeModel::parameters() {
  std::vector<Parameter*> out = emission_.parameters();
  out.push_back(&emission_log_scale_);
  for (auto& tr : transitions_) {
    for (Parameter* p : tr.parameters()) out.push_back(p);
  }
  out.push_back(&transition_log_scale_);
  if (cfg_.discrete_input == DiscreteInput::prev_observation) {
    for (Parameter* p : discrete_.parameters()) out.push_back(p);
  } else {
    out.push_back(&transition_table_);
  }
  out.push_back(&initial_mean_);
  out.push_back(&initial_logits_);
  return out;
}

std::vector<Parameter*> GenerativeModel::transition_parameters(int k) {
  check_state(k);
  return transitions_[static_cast<std::size_t>(k)].parameters();
}

}  // namespace snlds::model
