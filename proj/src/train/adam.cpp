// SPDX-License-Identifier: Apache-2.0
#include "snlds/train/adam.hpp"

#include <cmath>

namespace snlds::train {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Parameter* p : params_) {
    m_.push_back(Matrix::Zero(p->value().rows(), p->value().cols()));
    v_.push_back(Matrix::Zero(p->value().rows(), p->value().cols()));
  }
}

AdamReport Adam::step(double lr) {
  AdamReport report;
  double sq = 0.0;
  for (Parameter* p : params_) {
    if (p->grad().size() != p->value().size()) p->zero_grad();
    sq += p->grad().squaredNorm();
  }
  report.grad_norm = std::sqrt(sq);
  if (!std::isfinite(report.grad_norm)) {
    report.skipped = true;
    return report;
  }
  double scale = 1.0;
  if (cfg_.clip_norm > 0.0 && report.grad_norm > cfg_.clip_norm) {
    scale = cfg_.clip_norm / report.grad_norm;
    report.clipped = true;
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const Matrix g = params_[i]->grad() * scale;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    params_[i]->value().array() -=
        lr * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + cfg_.eps);
  }
  return report;
}

void Adam::save(nn::Checkpoint& ckpt, const std::string& prefix) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ckpt.arrays.push_back(nn::to_named_array(prefix + "m/" + params_[i]->name(), m_[i]));
    ckpt.arrays.push_back(nn::to_named_array(prefix + "v/" + params_[i]->name(), v_[i]));
  }
  ckpt.arrays.push_back(nn::to_named_array(prefix + "t", Matrix::Constant(1, 1, static_cast<double>(t_))));
}

void Adam::load(const nn::Checkpoint& ckpt, const std::string& prefix) {
  auto fetch = [&](const std::string& name, Matrix& dst) {
    const nn::NamedArray* a = ckpt.find(name);
    if (a == nullptr) throw nn::CheckpointError("checkpoint lacks optimizer tensor '" + name + "'");
    if (a->values.size() != static_cast<std::size_t>(dst.size())) {
      throw nn::CheckpointError("optimizer tensor '" + name + "' has the wrong size");
    }
    for (Eigen::Index j = 0; j < dst.size(); ++j) dst.data()[j] = a->values[static_cast<std::size_t>(j)];
  };
  for (std::size_t i = 0; i < params_.size(); ++i) {
    fetch(prefix + "m/" + params_[i]->name(), m_[i]);
    fetch(prefix + "v/" + params_[i]->name(), v_[i]);
  }
  Matrix t(1, 1);
  fetch(prefix + "t", t);
  t_ = static_cast<std::int64_t>(t(0, 0));
}

}  // namespace snlds::train
