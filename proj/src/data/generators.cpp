// SPDX-License-Identifier: Apache-2.0
#include "snlds/data/generators.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace snlds::data {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void check_length(int T, int n) {
  if (T < 2) throw nn::ConfigurationError("sequence length must be at least 2");
  if (n < 0) throw nn::ConfigurationError("trajectory count must be non-negative");
}

void add_noise(Matrix& x, double noise_std, std::mt19937_64& rng) {
  if (noise_std < 0.0) throw nn::ConfigurationError("noise_std must be non-negative");
  if (noise_std == 0.0) return;
  std::normal_distribution<double> normal(0.0, noise_std);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] += normal(rng);
}

}  // namespace

std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ (index * 0xD1B54A32D192ED03ULL)));
}

// Bouncing ball ----------------------------------------------------------

Trajectory simulate_bouncing_ball(double start, double velocity, int T, double wall,
                                  double noise_std, std::mt19937_64& rng) {
  Trajectory tr;
  tr.generator = "bouncing_ball";
  tr.x.resize(T, 1);
  tr.s_true.resize(static_cast<std::size_t>(T));
  double p = start;
  double v = velocity;
  for (int t = 0; t < T; ++t) {
    if ((p >= wall && v > 0.0) || (p <= 0.0 && v < 0.0)) v = -v;
    tr.x(t, 0) = p;
    tr.s_true[static_cast<std::size_t>(t)] = v >= 0.0 ? kBallUp : kBallDown;
    p += v;
    if (p > wall) {
      p = 2.0 * wall - p;
      v = -v;
    } else if (p < 0.0) {
      p = -p;
      v = -v;
    }
  }
  add_noise(tr.x, noise_std, rng);
  tr.params = {{"start", start}, {"velocity", velocity}, {"wall", wall}, {"noise_std", noise_std}};
  return tr;
}

std::vector<Trajectory> gen_bouncing_ball(std::uint64_t seed, int T, int n,
                                          const BouncingBallOptions& opt) {
  check_length(T, n);
  if (!(opt.wall > 0.0)) throw nn::ConfigurationError("wall distance must be positive");
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto rng = substream(seed, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> pos(0.0, opt.wall);
    std::uniform_real_distribution<double> vel(-opt.max_speed, opt.max_speed);
    const double p0 = pos(rng);
    const double v = vel(rng);
    Trajectory tr = simulate_bouncing_ball(opt.start.value_or(p0), opt.velocity.value_or(v), T,
                                           opt.wall, opt.noise_std, rng);
    tr.seed = seed;
    tr.params["index"] = i;
    out.push_back(std::move(tr));
  }
  return out;
}

// Dubins path ------------------------------------------------------------

DubinsState dubins_step(const DubinsState& s, double V, double u) {
  DubinsState n;
  if (std::abs(u) < 1e-12) {
    n.x = s.x + V * std::cos(s.theta);
    n.y = s.y + V * std::sin(s.theta);
    n.theta = s.theta;
    return n;
  }
  const double r = V / u;
  n.theta = s.theta + u;
  n.x = s.x + r * (std::sin(n.theta) - std::sin(s.theta));
  n.y = s.y - r * (std::cos(n.theta) - std::cos(s.theta));
  return n;
}

std::vector<std::uint8_t> sample_dubins_regimes(int T, double mean_duration, std::mt19937_64& rng) {
  if (!(mean_duration > 0.0)) throw nn::ConfigurationError("mean_duration must be positive");
  std::poisson_distribution<int> duration(mean_duration);
  std::uniform_int_distribution<int> first(0, 2);
  std::uniform_int_distribution<int> other(0, 1);
  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(T));
  int regime = first(rng);
  while (static_cast<int>(out.size()) < T) {
    const int len = std::max(1, duration(rng));
    for (int i = 0; i < len && static_cast<int>(out.size()) < T; ++i) {
      out.push_back(static_cast<std::uint8_t>(regime));
    }
    // Next regime is one of the two others.
    const int step = 1 + other(rng);
    regime = (regime + step) % 3;
  }
  return out;
}

Trajectory simulate_dubins(const std::vector<std::uint8_t>& regimes, double V, double u,
                           double theta0, double noise_std, std::mt19937_64& rng) {
  const int T = static_cast<int>(regimes.size());
  Trajectory tr;
  tr.generator = "dubins";
  tr.x.resize(T, 2);
  tr.s_true = regimes;
  DubinsState s{0.0, 0.0, theta0};
  for (int t = 0; t < T; ++t) {
    if (t > 0) {
      const std::uint8_t r = regimes[static_cast<std::size_t>(t)];
      const double rate = r == kLeft ? u : (r == kRight ? -u : 0.0);
      s = dubins_step(s, V, rate);
    }
    tr.x(t, 0) = s.x;
    tr.x(t, 1) = s.y;
  }
  add_noise(tr.x, noise_std, rng);
  tr.params = {{"speed", V}, {"turn_rate", u}, {"heading", theta0}, {"noise_std", noise_std}};
  return tr;
}

std::vector<Trajectory> gen_dubins(std::uint64_t seed, int T, int n, const DubinsOptions& opt) {
  check_length(T, n);
  if (!(opt.speed_min <= opt.speed_max) || !(opt.freq_min <= opt.freq_max)) {
    throw nn::ConfigurationError("dubins parameter ranges must satisfy min <= max");
  }
  std::vector<Trajectory> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto rng = substream(seed, static_cast<std::uint64_t>(i));
    std::uniform_real_distribution<double> speed(opt.speed_min, opt.speed_max);
    std::uniform_real_distribution<double> freq(opt.freq_min, opt.freq_max);
    std::uniform_real_distribution<double> heading(0.0, 2.0 * std::numbers::pi);
    const double V = speed(rng);
    const double u = 2.0 * std::numbers::pi * freq(rng);
    const double theta0 = heading(rng);
    std::vector<std::uint8_t> regimes = sample_dubins_regimes(T, opt.mean_duration, rng);
    if (opt.fixed_regime) std::fill(regimes.begin(), regimes.end(), *opt.fixed_regime);
    Trajectory tr = simulate_dubins(regimes, opt.speed.value_or(V), opt.turn_rate.value_or(u),
                                    opt.heading.value_or(theta0), opt.noise_std, rng);
    tr.seed = seed;
    tr.params["index"] = i;
    out.push_back(std::move(tr));
  }
  return out;
}

int regime_count(const std::string& generator) {
  if (generator == "bouncing_ball") return 2;
  if (generator == "dubins") return 3;
  throw nn::ConfigurationError("unknown generator '" + generator + "' (bouncing_ball, dubins)");
}

}  // namespace snlds::data
