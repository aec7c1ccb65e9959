// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "snlds/data/trajectory.hpp"

namespace snlds::data {

/// Generator for trajectory `index` of a dataset seeded with `seed`.
/// Streams are independent of how many trajectories are drawn.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index);

// Bouncing ball ----------------------------------------------------------

enum BallRegime : std::uint8_t { kBallUp = 0, kBallDown = 1 };

struct BouncingBallOptions {
  double wall = 10.0;
  double max_speed = 0.5;   // velocity ~ U(-max_speed, max_speed)
  double noise_std = 0.1;
  std::optional<double> start;     // fixes the initial position
  std::optional<double> velocity;  // fixes the velocity
};

/// A ball moving at constant speed between walls at 0 and `wall`.
/// Overshoot past a wall is mirrored back inside the same step.
Trajectory simulate_bouncing_ball(double start, double velocity, int T, double wall,
                                  double noise_std, std::mt19937_64& rng);

std::vector<Trajectory> gen_bouncing_ball(std::uint64_t seed, int T, int n,
                                          const BouncingBallOptions& opt = {});

// Dubins path ------------------------------------------------------------

enum DubinsRegime : std::uint8_t { kStraight = 0, kLeft = 1, kRight = 2 };

struct DubinsOptions {
  double speed_min = 0.1, speed_max = 0.5;
  double freq_min = 0.1, freq_max = 0.15;  // |u| / 2π
  double mean_duration = 25.0;
  double noise_std = 0.05;
  std::optional<double> speed;
  std::optional<double> turn_rate;  // |u|
  std::optional<double> heading;
  std::optional<DubinsRegime> fixed_regime;
};

struct DubinsState {
  double x = 0.0, y = 0.0, theta = 0.0;
};

/// Exact solution of one unit step of ẋ = V cos θ, ẏ = V sin θ, θ̇ = u.
DubinsState dubins_step(const DubinsState& s, double V, double u);

/// Regime sequence of length T with Poisson segment durations (min 1 step).
std::vector<std::uint8_t> sample_dubins_regimes(int T, double mean_duration, std::mt19937_64& rng);

/// Rolls out a path from the origin. labels[t] is the regime that moved the
/// vehicle into position t (labels[0] is the first segment's regime).
Trajectory simulate_dubins(const std::vector<std::uint8_t>& regimes, double V, double u,
                           double theta0, double noise_std, std::mt19937_64& rng);

std::vector<Trajectory> gen_dubins(std::uint64_t seed, int T, int n, const DubinsOptions& opt = {});

/// Number of ground-truth regimes each generator can emit.
int regime_count(const std::string& generator);

}  // namespace snlds::data
