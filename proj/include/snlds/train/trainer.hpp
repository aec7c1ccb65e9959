// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "snlds/data/trajectory.hpp"
#include "snlds/eval/metrics.hpp"
#include "snlds/nn/checkpoint.hpp"
#include "snlds/train/adam.hpp"
#include "snlds/train/learner.hpp"
#include "snlds/train/schedule.hpp"

namespace snlds::train {

struct TrainConfig {
  LearningRateSchedule lr;
  int batch_size = 32;
  std::int64_t steps = 10000;
  AnnealSchedule beta = AnnealSchedule::constant(0.0);
  AnnealSchedule tau{10.0, 0.975, 500, 0, 1.0};
  double clip_norm = 5.0;
  std::uint64_t seed = 0;
  int num_samples = 1;               // posterior draws per sequence
  std::int64_t metrics_every = 500;
  std::int64_t checkpoint_every = 0; // 0: follow metrics_every
  eval::AlignMode eval_alignment = eval::AlignMode::permutation;
  int eval_tolerance = 0;

  /// Throws nn::ConfigurationError.
  void validate() const;
};

struct MetricsRow {
  std::int64_t step = 0;
  double nll = 0.0;
  double elbo = 0.0;
  double ce = 0.0;
  double beta = 0.0;
  double tau = 1.0;
  double f1_frame = 0.0;   // NaN without a labelled evaluation set
  double f1_switch = 0.0;
};

void write_metrics_header(std::ostream& out);
void write_metrics_row(std::ostream& out, const MetricsRow& row);
std::vector<MetricsRow> read_metrics(std::istream& in);

/// ln(nll - min(nll) + 1) for every row.
std::vector<double> log_relative_nll(const std::vector<MetricsRow>& rows);

enum class TrainStatus { completed, diverged };

struct TrainResult {
  TrainStatus status = TrainStatus::completed;
  std::int64_t step = 0;
  std::string message;
  std::vector<MetricsRow> rows;
};

/// Decodes every trajectory, `chunk` sequences at a time.
std::vector<eval::Labels> segment(Learner& learner, std::span<const data::Trajectory> data,
                                  std::vector<Matrix>* gamma1 = nullptr, int chunk = 64);

/// Frame and switch F1 of `learner` on labelled trajectories.
eval::DatasetScore evaluate(Learner& learner, std::span<const data::Trajectory> data,
                            eval::AlignMode mode, const std::vector<int>& tolerances = {0, 5});

/// Runs stochastic variational inference with Adam.
///
/// Step s draws its minibatch and noise from a stream keyed on (seed, s), so
/// a resumed run replays exactly what an uninterrupted one would have done.
class Trainer {
 public:
  Trainer(Learner& learner, TrainConfig cfg, std::span<const data::Trajectory> train,
          std::span<const data::Trajectory> eval = {});

  /// Metrics CSV and checkpoints go here; nothing is written when unset.
  void set_output_dir(const std::filesystem::path& dir);
  /// Called after every completed step with the new step count.
  void set_step_callback(std::function<void(std::int64_t)> cb) { on_step_ = std::move(cb); }

  nn::Checkpoint checkpoint() const;
  void resume(const nn::Checkpoint& ckpt);

  TrainResult run();
  std::int64_t step() const { return step_; }
  const StepStats& last_stats() const { return last_; }

 private:
  std::vector<Matrix> draw_batch(std::mt19937_64& rng) const;
  MetricsRow metrics_row(const StepStats& mean) ;
  void emit(const MetricsRow& row, TrainResult& result);
  void save(const std::string& file) const;

  Learner& learner_;
  TrainConfig cfg_;
  std::span<const data::Trajectory> train_;
  std::span<const data::Trajectory> eval_;
  std::vector<nn::Parameter*> params_;
  Adam adam_;
  std::int64_t step_ = 0;
  StepStats last_;
  std::optional<std::filesystem::path> out_dir_;
  std::function<void(std::int64_t)> on_step_;
};

}  // namespace snlds::train
