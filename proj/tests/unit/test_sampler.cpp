#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "itowave/errors.hpp"
#include "itowave/sampler.hpp"
#include "itowave/stats.hpp"

using namespace itowave;
using nn::Tensor;

namespace {

class ConstantScore final : public ScoreModel {
 public:
  explicit ConstantScore(double v) : v_(v) {}
  Tensor score(const Tensor& x, std::span<const double>) const override {
    return Tensor(x.shape(), v_);
  }

 private:
  double v_;
};

// NaN once t drops below `below`.
class PoisonScore final : public ScoreModel {
 public:
  explicit PoisonScore(double below) : below_(below) {}
  Tensor score(const Tensor& x, std::span<const double> t) const override {
    return Tensor(x.shape(), t[0] < below_ ? NAN : 0.0);
  }

 private:
  double below_;
};

double variance_error(const Generation& g, double target) {
  return std::abs(stats::variance(g.samples.data()) - target) / target;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return 0.5 * (v[(v.size() - 1) / 2] + v[v.size() / 2]);
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("config validation") {
  SamplerConfig c;
  CHECK_NOTHROW(c.validate());
  c.snapshot_steps = {0, 500, 1000};
  CHECK_NOTHROW(c.validate());
  c.snapshot_steps = {1001};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.snapshot_steps = {-1};
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SamplerConfig{};
  c.n_steps = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = SamplerConfig{};
  c.snr = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("forward simulation") {
  SdeSpec spec = SdeSpec::paper();
  spec.n_steps = 100;
  const Tensor x0({3, 2}, {0.1, -0.2, 0.3, 0.0, 1.0, -1.0});
  NoiseBank zero = zero_noise(3);
  const Trajectory z = forward_simulate(spec, x0, zero, {50});
  REQUIRE(z.snapshots.size() == 3);
  CHECK(z.snapshots.front().step == 0);
  CHECK(z.find(100)->state == x0);
  CHECK(z.find(50) != nullptr);
  CHECK(z.find(7) == nullptr);

  // Mean preserved within 3 sigma.
  const std::size_t paths = 10000;
  Tensor start({paths, 1}, 0.25);
  NoiseBank noise = chain_noise(3, paths);
  const Trajectory t = forward_simulate(spec, start, noise);
  const double var = transition_variance(spec, spec.t_max);
  CHECK(std::abs(stats::mean(t.find(100)->state.data()) - 0.25) < 3.0 * std::sqrt(var / paths));
  CHECK(stats::variance(t.find(100)->state.data()) == doctest::Approx(var).epsilon(0.05));
}

TEST_CASE("predictor step") {
  const SdeSpec spec = SdeSpec::wide();
  const int n = 10;
  const double dt = spec.t_max / n;
  NoiseBank zero = zero_noise(1);
  Tensor x({1, 1}, 1.0);
  predictor_step(x, 3, n, spec, ZeroScore(), zero);
  CHECK(x[0] == 1.0);

  // x + g^2(t_{k+1}) s dt with s = -2.
  const double g2dt = diffusion_coeff_sq(spec, 4 * dt) * dt;
  predictor_step(x, 3, n, spec, ConstantScore(-2.0), zero);
  CHECK(x[0] == doctest::Approx(1.0 - 2.0 * g2dt).epsilon(1e-14));
  // Hand example: pick the score so that g^2 dt s = -0.2, i.e. g^2 dt = 0.1 with s = -2.
  Tensor y({1, 1}, 1.0);
  predictor_step(y, 3, n, spec, ConstantScore(-2.0 * 0.1 / g2dt), zero);
  CHECK(y[0] == doctest::Approx(0.8).epsilon(1e-14));

  // Noise term scales with g sqrt(dt).
  NoiseBank bank = chain_noise(1, 20000);
  Tensor many({20000, 1});
  predictor_step(many, 0, n, spec, ZeroScore(), bank);
  CHECK(stats::variance(many.data()) ==
        doctest::Approx(diffusion_coeff_sq(spec, dt) * dt).epsilon(0.05));

  NoiseBank two = zero_noise(2);
  CHECK_THROWS_AS(predictor_step(x, 3, n, spec, ZeroScore(), two), ShapeError);
}

TEST_CASE("corrector step") {
  SamplerConfig fixed;
  fixed.epsilon_rule = EpsilonRule::kFixed;
  fixed.fixed_epsilon = 0.1;
  NoiseBank zero = zero_noise(1);
  Tensor x({1, 1}, 2.0);
  CHECK(corrector_step(x, 0.0, StandardNormalScore(), fixed, zero) == 0.1);
  CHECK(x[0] == doctest::Approx(1.8).epsilon(1e-15));

  // Zero score: pure diffusion with variance 2 eps.
  NoiseBank bank = chain_noise(2, 20000);
  Tensor many({20000, 1});
  corrector_step(many, 0.0, ZeroScore(), fixed, bank);
  CHECK(stats::variance(many.data()) == doctest::Approx(0.2).epsilon(0.05));

  // Adaptive eps = 2 (snr |xi| / |s|)^2; a zero score falls back to fixed_epsilon.
  SamplerConfig adaptive;
  adaptive.fixed_epsilon = 1e-3;
  NoiseBank one = chain_noise(3, 1);
  Tensor z({1, 4});
  CHECK(corrector_step(z, 0.0, ZeroScore(), adaptive, one) == 1e-3);
  NoiseBank probe = chain_noise(4, 1);
  std::vector<double> xi(4);
  {
    RandomNoise copy(4, 0);
    for (double& v : xi) v = copy.normal();
  }
  double xi_norm = 0.0;
  for (double v : xi) xi_norm += v * v;
  xi_norm = std::sqrt(xi_norm);
  Tensor w({1, 4}, 1.0);
  const double eps = corrector_step(w, 0.0, ConstantScore(3.0), adaptive, probe);
  CHECK(eps == doctest::Approx(2.0 * std::pow(0.16 * xi_norm / 6.0, 2)).epsilon(1e-12));
}

TEST_CASE("ULA stationary variance at eps = 0.05") {
  // Exact for the N(0,1) score: Var = 1 / (1 - eps/2).
  SamplerConfig c;
  c.epsilon_rule = EpsilonRule::kFixed;
  c.fixed_epsilon = 0.05;
  const std::size_t chains = 20000;
  NoiseBank noise = chain_noise(5, chains);
  Tensor x({chains, 1}, 3.0);
  for (int s = 0; s < 600; ++s) corrector_step(x, 0.0, StandardNormalScore(), c, noise);
  CHECK(stats::variance(x.data()) == doctest::Approx(1.0 / (1.0 - 0.025)).epsilon(0.03));
  CHECK(std::abs(stats::mean(x.data())) < 0.03);
}

TEST_CASE("identity pipeline and determinism") {
  const SdeSpec spec = SdeSpec::wide();
  SamplerConfig c;
  c.n_steps = 1;
  c.corrector_steps_per_iter = 1;
  c.snapshot_steps = {0, 1};
  Tensor init({2, 3}, {0.1, 0.2, 0.3, -0.4, 0.5, -0.6});
  NoiseBank zero = zero_noise(2);
  const Generation g = generate_from(init, spec, ZeroScore(), c, zero);
  CHECK(g.samples == init);
  CHECK(g.trajectory.find(0)->state == init);

  SamplerConfig d;
  d.n_steps = 40;
  d.seed = 9;
  d.snapshot_steps = {0, 20, 40};
  const GaussianTargetScore score(spec, 0.0, 0.3);
  const Generation a = generate(5, 7, spec, score, d);
  const Generation b = generate(5, 7, spec, score, d);
  CHECK(a.samples == b.samples);
  REQUIRE(a.trajectory.snapshots.size() == 3);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(a.trajectory.snapshots[i].state == b.trajectory.snapshots[i].state);
  CHECK(a.trajectory.find(40)->state == a.samples);
  d.seed = 10;
  CHECK_FALSE(generate(5, 7, spec, score, d).samples == a.samples);

  // Under the fixed rule chain i only depends on stream i, so a bigger batch
  // extends the output instead of reshuffling it. (The adaptive rule averages
  // norms over the batch.)
  d.seed = 9;
  d.epsilon_rule = EpsilonRule::kFixed;
  d.fixed_epsilon = 1e-4;
  const Generation five = generate(5, 7, spec, score, d);
  const Generation eight = generate(8, 7, spec, score, d);
  for (std::size_t i = 0; i < 5 * 7; ++i) CHECK(eight.samples[i] == five.samples[i]);
}

TEST_CASE("non-finite state aborts with the iteration") {
  const SdeSpec spec = SdeSpec::wide();
  SamplerConfig c;
  c.n_steps = 10;
  try {
    generate(2, 4, spec, PoisonScore(0.45), c);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    // The corrector at t = k dt sees t < 0.45 first at k = 4, the 6th iteration.
    CHECK(std::string(e.what()).find("iteration 6 of 10") != std::string::npos);
  }
}

TEST_CASE("gaussian target recovery") {
  const SdeSpec spec = SdeSpec::wide();
  const GaussianTargetScore score(spec, -0.2, 0.09);
  SamplerConfig c;
  c.n_steps = 1000;
  c.seed = 1;
  const Generation g = generate(10000, 1, spec, score, c);
  CHECK(std::abs(stats::mean(g.samples.data()) + 0.2) < 0.02);
  CHECK(variance_error(g, 0.09) < 0.05);

  c.corrector_steps_per_iter = 0;
  const Generation p = generate(10000, 1, spec, score, c);
  CHECK(std::abs(stats::mean(p.samples.data()) + 0.2) < 0.02);
  CHECK(variance_error(p, 0.09) < 0.05);
}

TEST_CASE("corrector helps at small N") {
  const SdeSpec spec = SdeSpec::wide();
  // Target variance at sigma0^2, where the predictor's discretization error
  // (~11% at N = 50) dominates the corrector's own ~snr^2 Langevin bias.
  const double var = 1e-4;
  const GaussianTargetScore score(spec, 0.0, var);
  std::vector<double> pc, p;
  for (int rep = 0; rep < 20; ++rep) {
    SamplerConfig c;
    c.n_steps = 50;
    c.seed = 100 + rep;
    pc.push_back(variance_error(generate(4000, 1, spec, score, c), var));
    c.corrector_steps_per_iter = 0;
    p.push_back(variance_error(generate(4000, 1, spec, score, c), var));
  }
  MESSAGE("median variance error PC " << median(pc) << ", P " << median(p));
  CHECK(median(pc) <= median(p));
}

TEST_CASE("point mass time reversal") {
  SdeSpec spec = SdeSpec::paper();
  const std::vector<double> x0 = {0.3, -0.1, 0.0};
  const PointMassScore score(spec, x0);
  const std::size_t chains = 2000;
  Tensor start({chains, 3});
  for (std::size_t b = 0; b < chains; ++b) std::copy(x0.begin(), x0.end(), start.ptr() + b * 3);
  spec.n_steps = 1000;
  NoiseBank fwd = chain_noise(7, chains);
  const Trajectory t = forward_simulate(spec, start, fwd);

  SamplerConfig c;
  c.n_steps = 1000;
  NoiseBank rev = chain_noise(8, chains);
  const Generation g = generate_from(t.find(1000)->state, spec, score, c, rev);
  const double bound = 3.0 * std::sqrt(transition_variance(spec, spec.t_min));
  double mad = 0.0;
  for (std::size_t d = 0; d < 3; ++d) {
    double m = 0.0;
    for (std::size_t b = 0; b < chains; ++b) {
      m += g.samples.at(b, d);
      mad += std::abs(g.samples.at(b, d) - x0[d]);
    }
    CHECK(std::abs(m / chains - x0[d]) < bound);
  }
  CHECK(mad / (chains * 3) < 3.0 * spec.sigma0);
}

TEST_CASE("signal stats") {
  const std::vector<double> x = {1.0, -1.0, 1.0, -1.0};
  const SignalStats s = signal_stats(x);
  CHECK(s.rms == 1.0);
  CHECK(s.min == -1.0);
  CHECK(s.max == 1.0);
  CHECK(s.hf_rms == doctest::Approx(2.0));
  const std::vector<double> flat(10, 0.5);
  CHECK(signal_stats(flat).hf_rms == 0.0);
}

}  // TEST_SUITE
