// SPDX-License-Identifier: Apache-2.0
#include "snlds/train/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "snlds/nn/tensor.hpp"

namespace snlds::train {

double AnnealSchedule::value(std::int64_t step) const {
  if (step <= start_step) return initial;
  const double exponent = static_cast<double>(step - start_step) / static_cast<double>(decay_steps);
  return std::max(floor, initial * std::pow(rate, exponent));
}

void AnnealSchedule::validate(const char* what) const {
  const std::string name(what);
  if (!(rate > 0.0 && rate <= 1.0)) throw nn::ConfigurationError(name + " decay rate must lie in (0, 1]");
  if (decay_steps <= 0) throw nn::ConfigurationError(name + " decay steps must be positive");
  if (start_step < 0) throw nn::ConfigurationError(name + " start step must be non-negative");
  if (!std::isfinite(initial) || !std::isfinite(floor)) {
    throw nn::ConfigurationError(name + " schedule values must be finite");
  }
}

double LearningRateSchedule::value(std::int64_t step) const {
  if (step < warmup_steps) {
    const double frac = static_cast<double>(step) / static_cast<double>(warmup_steps);
    return warmup_start + (base - warmup_start) * frac;
  }
  if (decay_steps <= 0) return base;
  const double frac =
      std::min(1.0, static_cast<double>(step - warmup_steps) / static_cast<double>(decay_steps));
  return minimum + 0.5 * (base - minimum) * (1.0 + std::cos(std::numbers::pi * frac));
}

void LearningRateSchedule::validate() const {
  if (!(base > 0.0)) throw nn::ConfigurationError("learning rate must be positive");
  if (warmup_steps < 0 || decay_steps < 0) {
    throw nn::ConfigurationError("learning-rate step counts must be non-negative");
  }
  if (warmup_start < 0.0 || minimum < 0.0) {
    throw nn::ConfigurationError("learning-rate bounds must be non-negative");
  }
}

}  // namespace snlds::train
