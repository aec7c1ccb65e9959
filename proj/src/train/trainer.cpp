// SPDX-License-Identifier: Apache-2.0
#include "snlds/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numeric>
#include <sstream>

#include "snlds/data/generators.hpp"

namespace snlds::train {

namespace {

constexpr std::uint64_t kStepStream = 0x5354455053ULL;

std::mt19937_64 step_stream(std::uint64_t seed, std::int64_t step) {
  return data::substream(seed ^ kStepStream, static_cast<std::uint64_t>(step));
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

void TrainConfig::validate() const {
  lr.validate();
  beta.validate("beta");
  tau.validate("tau");
  if (tau.floor < 1.0) throw nn::ConfigurationError("tau floor must be at least 1");
  if (tau.initial < tau.floor) throw nn::ConfigurationError("tau must start at or above its floor");
  if (beta.floor < 0.0 || beta.initial < 0.0) {
    throw nn::ConfigurationError("beta must be non-negative");
  }
  if (batch_size < 1) throw nn::ConfigurationError("batch size must be positive");
  if (steps < 0) throw nn::ConfigurationError("step count must be non-negative");
  if (num_samples < 1) throw nn::ConfigurationError("num_samples must be positive");
  if (metrics_every < 1) throw nn::ConfigurationError("metrics cadence must be positive");
  if (checkpoint_every < 0) throw nn::ConfigurationError("checkpoint cadence must be non-negative");
  if (eval_tolerance < 0) throw nn::ConfigurationError("evaluation tolerance must be non-negative");
  if (!(clip_norm >= 0.0)) throw nn::ConfigurationError("clip norm must be non-negative");
}

// Metrics log ------------------------------------------------------------

void write_metrics_header(std::ostream& out) {
  out << "step,nll,elbo,ce,beta,tau,f1_frame,f1_switch\n";
}

void write_metrics_row(std::ostream& out, const MetricsRow& r) {
  std::ostringstream s;
  s << std::setprecision(12) << r.step << ',' << r.nll << ',' << r.elbo << ',' << r.ce << ','
    << r.beta << ',' << r.tau << ',' << r.f1_frame << ',' << r.f1_switch << '\n';
  out << s.str();
}

std::vector<MetricsRow> read_metrics(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line.rfind("step,nll,elbo", 0) != 0) {
    throw nn::ConfigurationError("metrics file lacks the expected header");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
    if (v.size() != 8) throw nn::ConfigurationError("malformed metrics row: " + line);
    rows.push_back({static_cast<std::int64_t>(v[0]), v[1], v[2], v[3], v[4], v[5], v[6], v[7]});
  }
  return rows;
}

std::vector<double> log_relative_nll(const std::vector<MetricsRow>& rows) {
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) lo = std::min(lo, r.nll);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(std::log(r.nll - lo + 1.0));
  return out;
}

// Segmentation -----------------------------------------------------------

std::vector<eval::Labels> segment(Learner& learner, std::span<const data::Trajectory> data,
                                  std::vector<Matrix>* gamma1, int chunk) {
  std::vector<eval::Labels> out;
  out.reserve(data.size());
  for (std::size_t begin = 0; begin < data.size(); begin += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(data.size(), begin + static_cast<std::size_t>(chunk));
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    data::SequenceBatch batch = data::make_batch(data, idx);
    for (Matrix& g : learner.posterior_marginals(batch.x)) {
      out.push_back(eval::decode(g));
      if (gamma1 != nullptr) gamma1->push_back(std::move(g));
    }
  }
  return out;
}

eval::DatasetScore evaluate(Learner& learner, std::span<const data::Trajectory> data,
                            eval::AlignMode mode, const std::vector<int>& tolerances) {
  std::vector<eval::Labels> truth;
  truth.reserve(data.size());
  for (const auto& tr : data) {
    if (!tr.has_labels()) throw nn::ConfigurationError("evaluation needs labelled trajectories");
    truth.emplace_back(tr.s_true.begin(), tr.s_true.end());
  }
  return eval::score_dataset(segment(learner, data), truth, mode, tolerances);
}

// Trainer ----------------------------------------------------------------

Trainer::Trainer(Learner& learner, TrainConfig cfg, std::span<const data::Trajectory> train,
                 std::span<const data::Trajectory> eval)
    : learner_(learner), cfg_(cfg), train_(train), eval_(eval) {
  cfg_.validate();
  if (cfg_.steps > 0 && train_.empty()) throw nn::ConfigurationError("training set is empty");
  params_ = learner_.parameters();
  adam_ = Adam(params_, AdamConfig{0.9, 0.999, 1e-8, cfg_.clip_norm});
}

void Trainer::set_output_dir(const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir / "checkpoints");
  out_dir_ = dir;
}

nn::Checkpoint Trainer::checkpoint() const {
  nn::Checkpoint ckpt;
  ckpt.step = static_cast<std::uint64_t>(step_);
  ckpt.arrays = nn::snapshot(params_);
  adam_.save(ckpt);
  return ckpt;
}

void Trainer::resume(const nn::Checkpoint& ckpt) {
  nn::restore(ckpt, params_);
  adam_.load(ckpt);
  step_ = static_cast<std::int64_t>(ckpt.step);
}

void Trainer::save(const std::string& file) const {
  if (out_dir_) nn::save_checkpoint(*out_dir_ / file, checkpoint());
}

std::vector<Matrix> Trainer::draw_batch(std::mt19937_64& rng) const {
  const std::size_t n = train_.size();
  const std::size_t B = std::min<std::size_t>(n, static_cast<std::size_t>(cfg_.batch_size));
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < B; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  std::vector<std::size_t> chosen;
  chosen.reserve(B * static_cast<std::size_t>(cfg_.num_samples));
  for (int s = 0; s < cfg_.num_samples; ++s) chosen.insert(chosen.end(), idx.begin(), idx.begin() + B);
  return data::make_batch(train_, chosen).x;
}

MetricsRow Trainer::metrics_row(const StepStats& mean) {
  MetricsRow row;
  row.step = step_;
  row.nll = mean.nll;
  row.elbo = mean.elbo;
  row.ce = mean.ce;
  row.beta = cfg_.beta.value(step_);
  row.tau = cfg_.tau.value(step_);
  const bool labelled = !eval_.empty() && std::all_of(eval_.begin(), eval_.end(),
                                                      [](const auto& t) { return t.has_labels(); });
  if (labelled) {
    eval::DatasetScore s = evaluate(learner_, eval_, cfg_.eval_alignment, {cfg_.eval_tolerance});
    row.f1_frame = s.f1_frame;
    row.f1_switch = s.f1_switch.front();
  } else {
    row.f1_frame = nan();
    row.f1_switch = nan();
  }
  return row;
}

void Trainer::emit(const MetricsRow& row, TrainResult& result) {
  result.rows.push_back(row);
  if (!out_dir_) return;
  const auto path = *out_dir_ / "metrics.csv";
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (fresh) write_metrics_header(out);
  write_metrics_row(out, row);
}

TrainResult Trainer::run() {
  TrainResult result;
  const std::int64_t ckpt_every = cfg_.checkpoint_every > 0 ? cfg_.checkpoint_every : cfg_.metrics_every;

  auto forward = [&](std::int64_t s, Graph& g, StepStats& st) {
    auto rng = step_stream(cfg_.seed, s);
    std::vector<Matrix> x = draw_batch(rng);
    return learner_.objective(g, x, rng, cfg_.beta.value(s - 1), cfg_.tau.value(s - 1), st);
  };

  auto diverge = [&](std::int64_t s, const std::string& why) {
    result.status = TrainStatus::diverged;
    result.step = step_;
    result.message = "diverged at step " + std::to_string(s) + ": " + why;
    save("last.ckpt");
  };

  if (step_ == 0) {
    StepStats st;
    if (!train_.empty()) {
      try {
        Graph g;
        if (!std::isfinite(forward(1, g, st).item())) {
          diverge(1, "objective is not finite");
          return result;
        }
      } catch (const nn::NumericError& e) {
        diverge(1, e.what());
        return result;
      }
    }
    emit(metrics_row(st), result);
    save("checkpoints/step_0.ckpt");
  }

  StepStats window;
  int in_window = 0;
  while (step_ < cfg_.steps) {
    Graph g;
    StepStats st;
    Tensor objective;
    std::string failure;
    try {
      objective = forward(step_ + 1, g, st);
      if (!std::isfinite(objective.item())) failure = "objective is not finite";
    } catch (const nn::NumericError& e) {
      failure = e.what();
    }
    if (!failure.empty()) {
      diverge(step_ + 1, failure);
      break;
    }
    for (nn::Parameter* p : params_) p->zero_grad();
    g.backward(nn::neg(objective));
    AdamReport rep = adam_.step(cfg_.lr.value(step_));
    if (rep.skipped) {
      std::cerr << "warning: non-finite gradient at step " << step_ + 1 << ", update skipped\n";
    }
    ++step_;
    last_ = st;
    window.nll += st.nll;
    window.elbo += st.elbo;
    window.ce += st.ce;
    window.objective += st.objective;
    ++in_window;
    if (on_step_) on_step_(step_);
    if (step_ % cfg_.metrics_every == 0) {
      StepStats mean{window.objective / in_window, window.nll / in_window,
                     window.elbo / in_window, window.ce / in_window};
      emit(metrics_row(mean), result);
      window = StepStats{};
      in_window = 0;
    }
    if (step_ % ckpt_every == 0) {
      std::ostringstream name;
      name << "checkpoints/step_" << step_ << ".ckpt";
      save(name.str());
    }
  }
  result.step = step_;
  if (result.status == TrainStatus::completed) save("last.ckpt");
  return result;
}

}  // namespace snlds::train
