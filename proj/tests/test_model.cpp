#include <doctest.h>

#include <numbers>

#include "oracles.hpp"
#include "snlds/model/generative.hpp"
#include "snlds/model/inference.hpp"

using namespace snlds;
using model::GenerativeModel;
using model::ModelConfig;
using nn::Graph;
using nn::Matrix;
using nn::Parameter;
using nn::RowVector;
using nn::Tensor;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Parameter& find(const std::vector<Parameter*>& ps, const std::string& name) {
  for (Parameter* p : ps) {
    if (p->name() == name) return *p;
  }
  FAIL("no parameter " << name);
  throw 0;
}

void randomize(const std::vector<Parameter*>& ps, std::mt19937_64& rng, double sd = 0.5) {
  std::normal_distribution<double> n(0.0, sd);
  for (Parameter* p : ps) {
    for (Eigen::Index i = 0; i < p->value().size(); ++i) p->value().data()[i] = n(rng);
  }
}

Matrix randn(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

ModelConfig tiny(int K, int H, int D, model::TransitionFamily f = model::TransitionFamily::mlp) {
  ModelConfig c;
  c.K = K;
  c.H = H;
  c.D = D;
  c.transition_family = f;
  c.emission_hidden = {3};
  c.transition_hidden = {3};
  c.discrete_hidden = {3};
  c.encoder_dim = 3;
  c.posterior_dim = 3;
  c.gumbel_hidden = 3;
  return c;
}

// Independent density evaluation for one sequence: emission, transition and
// discrete terms computed one scalar at a time through the public pieces.
double enumerate_log_joint(GenerativeModel& gen, const Matrix& x, const Matrix& z, double tau) {
  const int T = static_cast<int>(x.rows());
  const int K = gen.config().K;
  Graph g;
  Matrix log_pi = gen.log_initial(g).value();
  std::vector<double> emit(static_cast<std::size_t>(T));
  std::vector<std::vector<double>> trans(static_cast<std::size_t>(T), std::vector<double>(static_cast<std::size_t>(K)));
  for (int t = 0; t < T; ++t) {
    Graph h;
    emit[static_cast<std::size_t>(t)] =
        gen.emission_logprob(h, h.constant(Matrix(x.row(t))), h.constant(Matrix(z.row(t)))).item();
    for (int k = 0; k < K; ++k) {
      Graph q;
      trans[static_cast<std::size_t>(t)][static_cast<std::size_t>(k)] =
          t == 0 ? gen.initial_logprob(q, q.constant(Matrix(z.row(0))), k).item()
                 : gen.transition_logprob(q, q.constant(Matrix(z.row(t))), q.constant(Matrix(z.row(t - 1))), k).item();
    }
  }
  std::vector<Matrix> A;
  for (int t = 1; t < T; ++t) {
    A.push_back(gen.discrete_transition_matrix(RowVector(x.row(t - 1)), tau).array().log());
  }
  long total = 1;
  for (int t = 0; t < T; ++t) total *= K;
  std::vector<double> scores;
  for (long i = 0; i < total; ++i) {
    long rem = i;
    std::vector<int> s(static_cast<std::size_t>(T));
    for (int t = 0; t < T; ++t) {
      s[static_cast<std::size_t>(t)] = static_cast<int>(rem % K);
      rem /= K;
    }
    double v = log_pi(0, s[0]);
    for (int t = 0; t < T; ++t) {
      v += emit[static_cast<std::size_t>(t)] + trans[static_cast<std::size_t>(t)][static_cast<std::size_t>(s[static_cast<std::size_t>(t)])];
      if (t > 0) v += A[static_cast<std::size_t>(t - 1)](s[static_cast<std::size_t>(t - 1)], s[static_cast<std::size_t>(t)]);
    }
    scores.push_back(v);
  }
  return oracle::logsumexp(scores);
}

std::vector<Matrix> time_major(const Matrix& seq) {
  std::vector<Matrix> out;
  for (Eigen::Index t = 0; t < seq.rows(); ++t) out.push_back(seq.row(t));
  return out;
}

}  // namespace

TEST_CASE("emission and transition closed forms") {
  nn::Rng rng(1);
  ModelConfig c = tiny(2, 2, 2, model::TransitionFamily::linear);
  c.emission_hidden = {};
  GenerativeModel gen(c, rng);
  gen.emission_net().layers()[0].weight().value() = Matrix::Identity(2, 2);
  Graph g;
  Matrix z(1, 2);
  z << 0.3, -1.2;
  CHECK(gen.emission_logprob(g, g.constant(z), g.constant(z)).item() == doctest::Approx(-kLog2Pi));

  for (Parameter* p : gen.emission_net().parameters()) p->value().setZero();
  Graph h;
  CHECK(gen.emission_logprob(h, h.constant(Matrix::Zero(1, 2)), h.constant(z)).item() ==
        doctest::Approx(-kLog2Pi));
  CHECK_THROWS_AS(gen.emission_logprob(h, h.constant(Matrix::Zero(1, 3)), h.constant(z)),
                  nn::ConfigurationError);

  for (int k = 0; k < 2; ++k) {
    auto ps = gen.transition_parameters(k);
    ps[0]->value() = Matrix::Identity(2, 2);
    ps[1]->value().setZero();
  }
  Graph q;
  CHECK(gen.transition_logprob(q, q.constant(z), q.constant(z), 1).item() == doctest::Approx(-kLog2Pi));
  CHECK_THROWS_AS(gen.transition_logprob(q, q.constant(z), q.constant(z), 2), nn::UsageError);
  CHECK_THROWS_AS(gen.transition_logprob(q, q.constant(z), q.constant(z), -1), nn::UsageError);
}

TEST_CASE("states with identical parameters give identical densities") {
  nn::Rng rng(2);
  ModelConfig c = tiny(3, 2, 1);
  GenerativeModel gen(c, rng);
  auto src = gen.transition_parameters(0);
  auto dst = gen.transition_parameters(2);
  for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value() = src[i]->value();
  std::mt19937_64 r(3);
  for (int trial = 0; trial < 10; ++trial) {
    Graph g;
    Tensor zp = g.constant(randn(4, 2, r)), zt = g.constant(randn(4, 2, r));
    CHECK(gen.transition_logprob(g, zt, zp, 0).value() == gen.transition_logprob(g, zt, zp, 2).value());
  }
}

TEST_CASE("composition oracles for random networks") {
  std::mt19937_64 r(4);
  for (auto fam : {model::TransitionFamily::linear, model::TransitionFamily::mlp, model::TransitionFamily::gru}) {
    nn::Rng rng(5);
    GenerativeModel gen(tiny(2, 3, 2, fam), rng);
    randomize(gen.parameters(), r);
    Matrix x = randn(1, 2, r), z = randn(1, 3, r), zp = randn(1, 3, r);
    Graph g;
    Matrix fx = gen.emission_net().forward(g, g.constant(z)).value();
    const double emit = nn::gaussian_log_prob(RowVector(x), RowVector(fx), RowVector(gen.emission_log_scale().value()));
    CHECK(gen.emission_logprob(g, g.constant(x), g.constant(z)).item() == doctest::Approx(emit).epsilon(1e-12));
    Matrix fz = gen.transition_mean(g, g.constant(zp), 1).value();
    const double tr = nn::gaussian_log_prob(RowVector(z), RowVector(fz), RowVector(gen.transition_log_scale().value()));
    CHECK(gen.transition_logprob(g, g.constant(z), g.constant(zp), 1).item() == doctest::Approx(tr).epsilon(1e-12));
  }
}

TEST_CASE("discrete transition matrix") {
  nn::Rng rng(6);
  ModelConfig c = tiny(3, 2, 2);
  GenerativeModel gen(c, rng);
  RowVector xp(2);
  xp << 0.4, -0.9;
  for (Parameter* p : gen.discrete_net().parameters()) p->value().setZero();
  CHECK((gen.discrete_transition_matrix(xp, 1.0).array() - 1.0 / 3.0).abs().maxCoeff() < 1e-15);

  std::mt19937_64 r(7);
  randomize(gen.discrete_net().parameters(), r);
  Matrix logits = gen.discrete_transition_logits(xp);
  Matrix probs = gen.discrete_transition_matrix(xp, 1.0);
  for (int j = 0; j < 3; ++j) {
    const double z = oracle::logsumexp({logits(j, 0), logits(j, 1), logits(j, 2)});
    for (int k = 0; k < 3; ++k) CHECK(probs(j, k) == doctest::Approx(std::exp(logits(j, k) - z)));
    CHECK(probs.row(j).sum() == doctest::Approx(1.0));
  }

  ModelConfig hmm_only = c;
  hmm_only.discrete_input = model::DiscreteInput::none;
  GenerativeModel plain(hmm_only, rng);
  randomize({&plain.transition_table()}, r);
  RowVector other(2);
  other << 5.0, 5.0;
  CHECK(plain.discrete_transition_matrix(xp, 2.0) == plain.discrete_transition_matrix(other, 2.0));
}

TEST_CASE("potentials reproduce the enumerated joint density") {
  std::mt19937_64 r(8);
  for (int trial = 0; trial < 12; ++trial) {
    const int K = 1 + trial % 3;
    nn::Rng rng(static_cast<std::uint64_t>(trial));
    GenerativeModel gen(tiny(K, 2, 1, static_cast<model::TransitionFamily>(trial % 3)), rng);
    randomize(gen.parameters(), r);
    const int T = 4;
    Matrix x = randn(T, 1, r), z = randn(T, 2, r);
    const double tau = trial % 2 ? 1.0 : 3.0;
    Graph g;
    std::vector<Tensor> zs;
    for (int t = 0; t < T; ++t) zs.push_back(g.constant(Matrix(z.row(t))));
    hmm::PotentialTensors pot = gen.build_potentials(g, time_major(x), zs, tau);
    hmm::LogPotentials lp = pot.values(0);
    CHECK_NOTHROW(lp.validate(1e-10));
    const double got = hmm::forward_backward(lp).log_Z;
    CHECK(got == doctest::Approx(enumerate_log_joint(gen, x, z, tau)).epsilon(1e-10));

    // The emission term is shared across states, so state differences only
    // come from the transition terms.
    Graph h;
    for (int t = 1; t < T; ++t) {
      for (int k = 1; k < K; ++k) {
        const double d = lp.log_B(t, k) - lp.log_B(t, 0);
        const double dt = gen.transition_logprob(h, h.constant(Matrix(z.row(t))), h.constant(Matrix(z.row(t - 1))), k).item() -
                          gen.transition_logprob(h, h.constant(Matrix(z.row(t))), h.constant(Matrix(z.row(t - 1))), 0).item();
        CHECK(d == doctest::Approx(dt).epsilon(1e-10));
      }
    }
  }

  nn::Rng rng(9);
  GenerativeModel gen(tiny(2, 2, 1), rng);
  Graph g;
  hmm::PotentialTensors one = gen.build_potentials(g, {Matrix::Ones(1, 1)}, {g.constant(Matrix::Zero(1, 2))}, 1.0);
  CHECK(one.log_A.empty());
  CHECK(one.log_B.size() == 1);
}

TEST_CASE("linear single-state model is a Gaussian chain") {
  std::mt19937_64 r(10);
  for (int H = 1; H <= 2; ++H) {
    nn::Rng rng(11);
    ModelConfig c = tiny(1, H, 1, model::TransitionFamily::linear);
    c.emission_hidden = {};
    GenerativeModel gen(c, rng);
    randomize(gen.parameters(), r);
    const int T = 6;
    Matrix x = randn(T, 1, r), z = randn(T, H, r);
    auto ps = gen.transition_parameters(0);
    const Matrix& W = ps[0]->value();
    const Matrix& b = ps[1]->value();
    const Matrix& C = gen.emission_net().layers()[0].weight().value();
    const Matrix& d = gen.emission_net().layers()[0].bias().value();
    const RowVector q = gen.transition_log_scale().value();
    const RowVector rr = gen.emission_log_scale().value();
    double expect = 0.0;
    for (int t = 0; t < T; ++t) {
      RowVector mean = t == 0 ? RowVector(gen.initial_mean().value().row(0)) : RowVector(z.row(t - 1) * W + b);
      expect += nn::gaussian_log_prob(RowVector(z.row(t)), mean, q);
      expect += nn::gaussian_log_prob(RowVector(x.row(t)), RowVector(z.row(t) * C + d), rr);
    }
    Graph g;
    std::vector<Tensor> zs;
    for (int t = 0; t < T; ++t) zs.push_back(g.constant(Matrix(z.row(t))));
    const double got = hmm::forward_backward(gen.build_potentials(g, time_major(x), zs, 1.0).values(0)).log_Z;
    CHECK(got == doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("relabelling states with their parameters permutes the posterior") {
  std::mt19937_64 r(12);
  nn::Rng rng(13);
  ModelConfig c = tiny(3, 2, 1);
  c.discrete_hidden = {};
  GenerativeModel a(c, rng);
  randomize(a.parameters(), r);
  nn::Rng rng2(14);
  GenerativeModel b(c, rng2);
  const std::vector<int> perm = {2, 0, 1};  // new state k is old state perm[k]
  auto pa = a.parameters(), pb = b.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) pb[i]->value() = pa[i]->value();
  for (int k = 0; k < 3; ++k) {
    auto src = a.transition_parameters(perm[static_cast<std::size_t>(k)]);
    auto dst = b.transition_parameters(k);
    for (std::size_t i = 0; i < src.size(); ++i) dst[i]->value() = src[i]->value();
    b.initial_mean().value().row(k) = a.initial_mean().value().row(perm[static_cast<std::size_t>(k)]);
    b.initial_logits().value()(0, k) = a.initial_logits().value()(0, perm[static_cast<std::size_t>(k)]);
  }
  // Discrete net is a single affine map on [x, onehot(j)] -> K logits.
  Matrix& wa = a.discrete_net().layers()[0].weight().value();
  Matrix& wb = b.discrete_net().layers()[0].weight().value();
  Matrix& ba = a.discrete_net().layers()[0].bias().value();
  Matrix& bb = b.discrete_net().layers()[0].bias().value();
  for (int k = 0; k < 3; ++k) {
    const int ok = perm[static_cast<std::size_t>(k)];
    bb(0, k) = ba(0, ok);
    wb(0, k) = wa(0, ok);
    for (int j = 0; j < 3; ++j) wb(1 + j, k) = wa(1 + perm[static_cast<std::size_t>(j)], ok);
  }
  const int T = 5;
  Matrix x = randn(T, 1, r), z = randn(T, 2, r);
  auto posterior = [&](GenerativeModel& m) {
    Graph g;
    std::vector<Tensor> zs;
    for (int t = 0; t < T; ++t) zs.push_back(g.constant(Matrix(z.row(t))));
    return hmm::forward_backward(m.build_potentials(g, time_major(x), zs, 1.0).values(0));
  };
  auto pa_post = posterior(a), pb_post = posterior(b);
  CHECK(pa_post.log_Z == doctest::Approx(pb_post.log_Z).epsilon(1e-12));
  for (int t = 0; t < T; ++t) {
    for (int k = 0; k < 3; ++k) {
      CHECK(pb_post.gamma1(t, k) == doctest::Approx(pa_post.gamma1(t, perm[static_cast<std::size_t>(k)])).epsilon(1e-10));
    }
  }
}

TEST_CASE("inference network") {
  std::mt19937_64 r(15);
  nn::Rng rng(16);
  ModelConfig c = tiny(2, 2, 1);
  model::InferenceNetwork inf(c, rng);
  randomize(inf.parameters(), r);
  const int T = 4;
  std::vector<Matrix> x;
  for (int t = 0; t < T; ++t) x.push_back(randn(2, 1, r));

  SUBCASE("zero noise follows the means") {
    Graph g;
    std::vector<Matrix> zero(T, Matrix::Zero(2, 2));
    auto q = inf.sample_posterior(g, inf.encode(g, x), zero);
    for (int t = 0; t < T; ++t) CHECK(q.z[static_cast<std::size_t>(t)].value() == q.mean[static_cast<std::size_t>(t)].value());
  }
  SUBCASE("unit scale head has closed-form entropy") {
    Parameter& w = find(inf.parameters(), "inf/head/weight");
    Parameter& b = find(inf.parameters(), "inf/head/bias");
    w.value().rightCols(2).setZero();
    b.value().rightCols(2).setZero();
    Graph g;
    std::vector<Matrix> noise;
    for (int t = 0; t < T; ++t) noise.push_back(randn(2, 2, r));
    auto q = inf.sample_posterior(g, inf.encode(g, x), noise);
    CHECK(q.entropy.value()(0, 0) == doctest::Approx(T * 2 * 0.5 * (1.0 + kLog2Pi)));
  }
  SUBCASE("log q gradient against finite differences") {
    std::vector<Matrix> noise;
    for (int t = 0; t < T; ++t) noise.push_back(randn(2, 2, r));
    auto value = [&] {
      Graph g;
      return nn::sum(inf.sample_posterior(g, inf.encode(g, x), noise).log_q).item();
    };
    for (Parameter* p : inf.parameters()) p->zero_grad();
    Graph g;
    g.backward(nn::sum(inf.sample_posterior(g, inf.encode(g, x), noise).log_q));
    for (Parameter* p : inf.parameters()) {
      Matrix fd = oracle::numeric_gradient(p->value(), value);
      CAPTURE(p->name());
      CHECK((p->grad() - fd).norm() <= 1e-4 * std::max(1.0, fd.norm()));
    }
  }
  SUBCASE("analytic entropy is the mean of -log q") {
    const int draws = 10000;
    std::vector<double> samples;
    double analytic = 0.0;
    std::mt19937_64 nr(17);
    std::normal_distribution<double> n;
    for (int i = 0; i < draws; ++i) {
      std::vector<Matrix> noise;
      for (int t = 0; t < T; ++t) {
        Matrix m(1, 2);
        m << n(nr), n(nr);
        noise.push_back(m);
      }
      Graph g;
      std::vector<Matrix> x0;
      for (const Matrix& m : x) x0.push_back(m.row(0));
      auto q = inf.sample_posterior(g, inf.encode(g, x0), noise);
      samples.push_back(-q.log_q.item());
      analytic += q.entropy.item();
    }
    analytic /= draws;
    double mean = 0.0, var = 0.0;
    for (double s : samples) mean += s;
    mean /= draws;
    for (double s : samples) var += (s - mean) * (s - mean);
    const double se = std::sqrt(var / (draws - 1) / draws);
    CHECK(std::abs(mean - analytic) <= 3.0 * se);
  }
  SUBCASE("bad noise is rejected") {
    Graph g;
    std::vector<Matrix> noise(T, Matrix::Zero(2, 2));
    noise[1](0, 0) = std::nan("");
    CHECK_THROWS_AS(inf.sample_posterior(g, inf.encode(g, x), noise), nn::UsageError);
  }
}
