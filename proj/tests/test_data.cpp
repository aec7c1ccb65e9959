#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "snlds/data/generators.hpp"

using namespace snlds;
using namespace snlds::data;

TEST_CASE("bouncing ball") {
  SUBCASE("reflection arithmetic") {
    BouncingBallOptions opt;
    opt.noise_std = 0.0;
    opt.start = 5.0;
    opt.velocity = 0.5;
    Trajectory tr = gen_bouncing_ball(1, 40, 1, opt).front();
    int first_flip = -1;
    for (int t = 1; t < 40; ++t) {
      if (tr.s_true[static_cast<std::size_t>(t)] != tr.s_true[static_cast<std::size_t>(t - 1)]) {
        first_flip = t;
        break;
      }
    }
    CHECK(first_flip == 10);
    CHECK(tr.x(10, 0) == doctest::Approx(10.0));
    CHECK(tr.x(11, 0) == doctest::Approx(9.5));
    CHECK(tr.s_true[0] == kBallUp);
    CHECK(tr.s_true[10] == kBallDown);
  }
  SUBCASE("still ball") {
    BouncingBallOptions opt;
    opt.noise_std = 0.0;
    opt.velocity = 0.0;
    Trajectory tr = gen_bouncing_ball(3, 50, 1, opt).front();
    CHECK((tr.x.array() == tr.x(0, 0)).all());
    for (auto s : tr.s_true) CHECK(s == tr.s_true[0]);
  }
  SUBCASE("physical invariants") {
    BouncingBallOptions opt;
    opt.noise_std = 0.0;
    auto data = gen_bouncing_ball(7, 100, 200, opt);
    for (const Trajectory& tr : data) {
      REQUIRE(tr.steps() == 100);
      CHECK(tr.dim() == 1);
      CHECK(tr.x.minCoeff() >= 0.0);
      CHECK(tr.x.maxCoeff() <= 10.0);
      const double speed = std::abs(tr.params.at("velocity"));
      CHECK(speed <= 0.5);
      for (int t = 0; t + 1 < 100; ++t) {
        const double dx = tr.x(t + 1, 0) - tr.x(t, 0);
        // Away from a bounce the step is exactly ±speed and its sign is the label.
        if (std::abs(std::abs(dx) - speed) < 1e-9 && speed > 0.0) {
          CHECK(tr.s_true[static_cast<std::size_t>(t)] == (dx > 0 ? kBallUp : kBallDown));
        }
      }
    }
  }
  SUBCASE("defaults") {
    auto data = gen_bouncing_ball(5, 100, 50);
    double resid = 0.0;
    int n = 0;
    BouncingBallOptions clean;
    clean.noise_std = 0.0;
    auto truth = gen_bouncing_ball(5, 100, 50, clean);
    for (std::size_t i = 0; i < data.size(); ++i) {
      resid += (data[i].x - truth[i].x).array().square().sum();
      n += 100;
      CHECK(data[i].s_true == truth[i].s_true);
    }
    CHECK(std::sqrt(resid / n) == doctest::Approx(0.1).epsilon(0.05));
  }
  CHECK_THROWS_AS(gen_bouncing_ball(1, 1, 3), nn::ConfigurationError);
}

TEST_CASE("dubins paths") {
  SUBCASE("straight line") {
    DubinsOptions opt;
    opt.noise_std = 0.0;
    opt.fixed_regime = kStraight;
    opt.heading = 0.0;
    opt.speed = 0.2;
    Trajectory tr = gen_dubins(2, 30, 1, opt).front();
    for (int t = 0; t < 30; ++t) {
      CHECK(tr.x(t, 0) == doctest::Approx(0.2 * t).epsilon(1e-12));
      CHECK(std::abs(tr.x(t, 1)) < 1e-12);
    }
  }
  SUBCASE("turns stay on the analytic circle") {
    for (auto regime : {kLeft, kRight}) {
      DubinsOptions opt;
      opt.noise_std = 0.0;
      opt.fixed_regime = regime;
      auto data = gen_dubins(11, 100, 20, opt);
      for (const Trajectory& tr : data) {
        const double V = tr.params.at("speed"), th = tr.params.at("heading");
        const double u = (regime == kLeft ? 1.0 : -1.0) * tr.params.at("turn_rate");
        const double cx = -V * std::sin(th) / u, cy = V * std::cos(th) / u;
        for (int t = 0; t < 100; ++t) {
          CHECK(std::hypot(tr.x(t, 0) - cx, tr.x(t, 1) - cy) == doctest::Approx(std::abs(V / u)).epsilon(1e-9));
        }
      }
    }
  }
  SUBCASE("speed and heading per step") {
    DubinsOptions opt;
    opt.noise_std = 0.0;
    auto data = gen_dubins(13, 100, 50, opt);
    for (const Trajectory& tr : data) {
      const double V = tr.params.at("speed"), u = tr.params.at("turn_rate");
      CHECK(V >= 0.1);
      CHECK(V <= 0.5);
      CHECK(u / (2 * std::numbers::pi) >= 0.1);
      CHECK(u / (2 * std::numbers::pi) <= 0.15);
      CHECK(tr.x(0, 0) == 0.0);
      CHECK(tr.x(0, 1) == 0.0);
      for (int t = 1; t < 100; ++t) {
        const auto r = tr.s_true[static_cast<std::size_t>(t)];
        const double step = std::hypot(tr.x(t, 0) - tr.x(t - 1, 0), tr.x(t, 1) - tr.x(t - 1, 1));
        // Arc length is V; the straight-line chord across an arc is 2 (V/u) sin(u/2).
        const double chord = r == kStraight ? V : 2.0 * (V / u) * std::sin(u / 2.0);
        CHECK(step == doctest::Approx(chord).epsilon(1e-9));
      }
      // Heading changes by ±u on turns and not at all on straights.
      for (int t = 2; t < 100; ++t) {
        const double a1 = std::atan2(tr.x(t - 1, 1) - tr.x(t - 2, 1), tr.x(t - 1, 0) - tr.x(t - 2, 0));
        const double a2 = std::atan2(tr.x(t, 1) - tr.x(t - 1, 1), tr.x(t, 0) - tr.x(t - 1, 0));
        double d = std::remainder(a2 - a1, 2 * std::numbers::pi);
        const auto r1 = tr.s_true[static_cast<std::size_t>(t - 1)], r2 = tr.s_true[static_cast<std::size_t>(t)];
        // Chord directions rotate by the average of the two half-turns.
        auto rate = [&](std::uint8_t s) { return s == kLeft ? u : (s == kRight ? -u : 0.0); };
        CHECK(d == doctest::Approx(0.5 * (rate(r1) + rate(r2))).epsilon(1e-9).scale(1.0));
      }
    }
  }
  SUBCASE("regime statistics") {
    double segments = 0.0;
    const int n = 1000, T = 100;
    auto data = gen_dubins(17, T, n);
    for (const Trajectory& tr : data) {
      int count = 1;
      for (int t = 1; t < T; ++t) {
        const auto a = tr.s_true[static_cast<std::size_t>(t - 1)], b = tr.s_true[static_cast<std::size_t>(t)];
        if (a != b) ++count;
      }
      segments += count;
      for (auto s : tr.s_true) CHECK(s < 3);
    }
    // Segments of mean length 25 give about 1 + 99/25 regimes per sequence.
    CHECK(segments / n == doctest::Approx(1.0 + (T - 1) / 25.0).epsilon(0.1));
  }
}

TEST_CASE("generators are pure functions of the seed") {
  auto a = gen_dubins(3, 60, 10), b = gen_dubins(3, 60, 10), c = gen_dubins(4, 60, 10);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].x == b[i].x);
    CHECK(a[i].s_true == b[i].s_true);
  }
  CHECK(a[0].x != c[0].x);
  auto p = gen_bouncing_ball(3, 60, 10), q = gen_bouncing_ball(3, 60, 10);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(p[i].x == q[i].x);
  // A trajectory does not depend on how many others were generated.
  CHECK(gen_bouncing_ball(3, 60, 3)[2].x == p[2].x);
}

TEST_CASE("dataset container") {
  auto data = gen_dubins(9, 20, 4);
  data[2].s_true.clear();
  std::stringstream buf;
  write_dataset(buf, data);
  auto back = read_dataset(buf);
  REQUIRE(back.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(back[i].x == data[i].x);
    CHECK(back[i].s_true == data[i].s_true);
  }
  CHECK_FALSE(back[2].has_labels());

  std::stringstream empty;
  write_dataset(empty, std::vector<Trajectory>{});
  CHECK(read_dataset(empty).empty());

  const auto dir = std::filesystem::temp_directory_path() / "snlds_test_dataset";
  std::filesystem::create_directories(dir);
  save_dataset(dir / "a.bin", data);
  save_dataset(dir / "b.bin", gen_dubins(9, 20, 4));
  save_dataset(dir / "c.bin", gen_dubins(9, 20, 4));
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  CHECK(slurp(dir / "b.bin") == slurp(dir / "c.bin"));
  CHECK(load_dataset(dir / "a.bin").size() == 4);

  std::stringstream junk("SNLDSDAT garbage");
  CHECK_THROWS_AS(read_dataset(junk), DatasetError);

  std::ostringstream csv;
  write_dataset_csv(csv, data);
  CHECK(csv.str().rfind("sequence,t,x0,x1,label\n", 0) == 0);
  std::filesystem::remove_all(dir);
}
