// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "snlds/model/config.hpp"
#include "snlds/model/generative.hpp"
#include "snlds/model/inference.hpp"
#include "snlds/train/objective.hpp"

namespace snlds::train {

/// Batch-averaged monitoring values, in per-sequence units.
struct StepStats {
  double objective = 0.0;  // the normalised value being maximised
  double nll = 0.0;        // -mean log p(x, z̃)
  double elbo = 0.0;
  double ce = 0.0;         // mean Σ_t KL(uniform || q(s_t))
};

/// A trainable segmentation model: SNLDS with collapsed discrete states or
/// its Gumbel-Softmax relaxation.
class Learner {
 public:
  virtual ~Learner() = default;

  virtual std::string kind() const = 0;
  virtual const model::ModelConfig& config() const = 0;
  virtual std::vector<nn::Parameter*> parameters() = 0;
  virtual model::GenerativeModel& generative() = 0;

  /// Records the objective for x (T blocks of B x D) on `g`. Randomness is
  /// drawn from `rng` only.
  virtual Tensor objective(Graph& g, const std::vector<Matrix>& x, std::mt19937_64& rng, double beta,
                           double tau, StepStats& stats) = 0;

  /// Deterministic per-sequence state marginals (T x K), zero posterior noise.
  virtual std::vector<Matrix> posterior_marginals(const std::vector<Matrix>& x) = 0;
};

class SnldsLearner final : public Learner {
 public:
  SnldsLearner(const model::ModelConfig& cfg, std::uint64_t init_seed,
               EntropyMode entropy = EntropyMode::analytic);

  std::string kind() const override { return "snlds"; }
  const model::ModelConfig& config() const override { return gen_.config(); }
  std::vector<nn::Parameter*> parameters() override;
  model::GenerativeModel& generative() override { return gen_; }
  model::InferenceNetwork& inference() { return inf_; }

  Tensor objective(Graph& g, const std::vector<Matrix>& x, std::mt19937_64& rng, double beta,
                   double tau, StepStats& stats) override;
  std::vector<Matrix> posterior_marginals(const std::vector<Matrix>& x) override;

 private:
  model::GenerativeModel gen_;
  model::InferenceNetwork inf_;
  EntropyMode entropy_;
};

/// Standard-normal blocks shaped like x with width H.
std::vector<Matrix> normal_noise(int T, Eigen::Index rows, int H, std::mt19937_64& rng);

std::unique_ptr<Learner> make_learner(const std::string& kind, const model::ModelConfig& cfg,
                                      std::uint64_t init_seed,
                                      EntropyMode entropy = EntropyMode::analytic);

}  // namespace snlds::train
