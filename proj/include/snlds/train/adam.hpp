// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "snlds/nn/checkpoint.hpp"
#include "snlds/nn/tensor.hpp"

namespace snlds::train {

using nn::Matrix;
using nn::Parameter;

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;  // global L2 norm; <= 0 disables clipping
};

struct AdamReport {
  double grad_norm = 0.0;  // before clipping
  bool clipped = false;
  bool skipped = false;    // non-finite gradient, parameters untouched
};

/// Adam with bias correction over a fixed, ordered parameter list.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter*> params, AdamConfig cfg = {});

  /// Applies one update from the parameters' accumulated gradients.
  AdamReport step(double lr);

  std::int64_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  /// Moments stored as "<prefix>m/<name>" and "<prefix>v/<name>".
  void save(nn::Checkpoint& ckpt, const std::string& prefix = "adam/") const;
  void load(const nn::Checkpoint& ckpt, const std::string& prefix = "adam/");
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Matrix> m_, v_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

}  // namespace snlds::train
