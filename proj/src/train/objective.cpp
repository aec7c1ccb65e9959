// SPDX-License-Identifier: Apache-2.0
#include "snlds/train/objective.hpp"

namespace snlds::train {

EntropyMode parse_entropy_mode(const std::string& s) {
  if (s == "analytic") return EntropyMode::analytic;
  if (s == "sample") return EntropyMode::sample;
  throw nn::ConfigurationError("unknown entropy mode '" + s + "' (analytic, sample)");
}

std::string to_string(EntropyMode m) { return m == EntropyMode::sample ? "sample" : "analytic"; }

ElboTerms elbo_terms(Graph& g, model::GenerativeModel& gen, model::InferenceNetwork& inf,
                     const std::vector<Matrix>& x, const std::vector<Matrix>& noise, double tau,
                     double beta, EntropyMode entropy) {
  if (x.empty()) throw nn::ConfigurationError("elbo_terms needs at least one step");
  const auto B = static_cast<int>(x.front().rows());
  const auto T = static_cast<int>(x.size());

  ElboTerms out;
  std::vector<Tensor> h_x = inf.encode(g, x);
  model::PosteriorSample q = inf.sample_posterior(g, h_x, noise);
  hmm::PotentialTensors pot = gen.build_potentials(g, x, q.z, tau);

  out.posteriors.reserve(static_cast<std::size_t>(B));
  for (int b = 0; b < B; ++b) {
    out.posteriors.push_back(hmm::forward_backward(pot.values(b)));
    out.log_Z.push_back(out.posteriors.back().log_Z);
  }
  out.surrogate = hmm::surrogate_loss(pot, out.posteriors);

  Tensor per_seq_entropy = entropy == EntropyMode::analytic ? q.entropy : nn::neg(q.log_q);
  out.entropy = nn::sum(per_seq_entropy);
  const Matrix& ev = per_seq_entropy.value();
  out.entropy_per_seq.assign(ev.data(), ev.data() + ev.size());

  if (beta != 0.0) {
    hmm::MarginalTensors marg = hmm::forward_backward(pot);
    out.ce = nn::sum(hmm::posterior_uniform_kl(marg.log_gamma1));
  } else {
    double ce = 0.0;
    for (const auto& p : out.posteriors) ce += hmm::posterior_uniform_kl(p.gamma1);
    out.ce = g.constant(ce);
  }

  // Shift the surrogate onto log p(x, z̃) so the objective reads as the ELBO; the gradient is unchanged.
  double log_z = 0.0;
  for (double v : out.log_Z) log_z += v;
  Tensor log_p = nn::add_scalar(out.surrogate, log_z - out.surrogate.item());
  out.objective = (log_p + out.entropy - beta * out.ce) * (1.0 / (static_cast<double>(B) * T));
  return out;
}

}  // namespace snlds::train
