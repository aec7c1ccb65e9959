// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

namespace snlds::train {

/// Exponential decay held flat until `start_step`:
///   value(s) = initial                                           for s <= start_step
///   value(s) = max(floor, initial * rate^((s - start_step) / decay_steps))  otherwise
struct AnnealSchedule {
  double initial = 1.0;
  double rate = 1.0;
  std::int64_t decay_steps = 1;
  std::int64_t start_step = 0;
  double floor = 0.0;

  double value(std::int64_t step) const;
  /// Throws nn::ConfigurationError.
  void validate(const char* what) const;

  static AnnealSchedule constant(double v) { return {v, 1.0, 1, 0, v}; }
};

/// Linear warm-up from `warmup_start` to `base`, then cosine decay to
/// `minimum` over `decay_steps`. decay_steps = 0 keeps `base` after warm-up.
struct LearningRateSchedule {
  double base = 1e-3;
  double warmup_start = 1e-3;
  std::int64_t warmup_steps = 0;
  std::int64_t decay_steps = 0;
  double minimum = 0.0;

  double value(std::int64_t step) const;
  void validate() const;
};

}  // namespace snlds::train
