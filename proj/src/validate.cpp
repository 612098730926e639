#include "itowave/validate.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "itowave/sampler.hpp"
#include "itowave/stats.hpp"
#include "itowave/training.hpp"

namespace itowave {

using nn::Tensor;

namespace {

void add(ValidationReport& r, std::string name, double measured, double expected, double tol,
         bool passed) {
  r.checks.push_back({std::move(name), measured, expected, tol, passed});
}

std::string time_label(double t) {
  std::ostringstream s;
  s << t;
  return s.str();
}

}  // namespace

bool ValidationReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

void ValidationReport::print(std::ostream& out) const {
  std::ostringstream s;
  s.precision(10);
  s << "check\tmeasured\texpected\ttolerance\tstatus\n";
  for (const CheckResult& c : checks) {
    s << c.name << '\t' << c.measured << '\t' << c.expected << '\t' << c.tolerance << '\t'
      << (c.passed ? "PASS" : "FAIL") << '\n';
  }
  s << "overall\t\t\t\t" << (all_passed() ? "PASS" : "FAIL") << '\n';
  out << s.str();
}

void check_score_formula(ValidationReport& report, const ValidateOptions& options) {
  const SdeSpec spec = SdeSpec::paper();
  RandomNoise rng(options.seed, 101);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 1 + static_cast<std::size_t>(rng.uniform(0.0, 4.0));
    const double t = rng.uniform(spec.t_min, spec.t_max);
    const double sd = std::sqrt(transition_variance(spec, t));
    std::vector<double> x0(d), xt(d);
    for (std::size_t i = 0; i < d; ++i) {
      x0[i] = rng.uniform(-1.0, 1.0);
      xt[i] = x0[i] + sd * rng.normal();
    }
    const std::vector<double> analytic = options.transition_score(spec, xt, x0, t);
    const double h = 1e-3 * sd;
    for (std::size_t i = 0; i < d; ++i) {
      std::vector<double> up = xt, dn = xt;
      up[i] += h;
      dn[i] -= h;
      const double fd = (log_transition_density(spec, up, x0, t) -
                         log_transition_density(spec, dn, x0, t)) /
                        (2.0 * h);
      // Floor the denominator at 1e-3 / sd so that near-zero scores compare absolutely.
      const double denom = std::max(std::abs(fd), 1e-3 / sd);
      worst = std::max(worst, std::abs(analytic.at(i) - fd) / denom);
    }
  }
  add(report, "score_finite_difference_rel_err", worst, 0.0, 1e-5, worst <= 1e-5);
}

double integrate_moment_ode(const SdeSpec& spec, double t, int steps) {
  // VE: dV/dt = 2 f V + g^2 with f = 0.
  auto rhs = [&](double s) { return diffusion_coeff_sq(spec, std::min(s, spec.t_max)); };
  const double h = t / steps;
  double v = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double s = i * h;
    const double k1 = rhs(s);
    const double k2 = rhs(s + 0.5 * h);
    const double k4 = rhs(s + h);
    v += h * (k1 + 4.0 * k2 + k4) / 6.0;
  }
  return v;
}

void check_moment_ode(ValidationReport& report) {
  const SdeSpec spec = SdeSpec::paper();
  double worst = 0.0;
  for (int i = 1; i <= 100; ++i) {
    const double t = spec.t_max * i / 100.0;
    const double closed = transition_variance(spec, t);
    const double ode = integrate_moment_ode(spec, t, 1000);
    worst = std::max(worst, std::abs(closed - ode) / closed);
  }
  add(report, "moment_ode_rel_err", worst, 0.0, 1e-8, worst <= 1e-8);
}

void check_forward_variance(ValidationReport& report, const ValidateOptions& options) {
  SdeSpec spec = SdeSpec::paper();
  spec.n_steps = 1000;
  const std::size_t paths = 10000;
  Tensor x0({paths, 1});
  NoiseBank noise = chain_noise(options.seed, paths, 1 << 20);
  const std::vector<int> steps = {250, 500, 1000};
  const Trajectory traj = forward_simulate(spec, x0, noise, steps);
  for (int s : steps) {
    const double t = spec.dt() * s;
    const double measured = stats::variance(traj.find(s)->state.data());
    const double expected = transition_variance(spec, t);
    const double rel = std::abs(measured - expected) / expected;
    add(report, "forward_variance_t" + time_label(t), measured, expected, 0.05 * expected,
        rel <= 0.05);
  }
}

void check_langevin_stationarity(ValidationReport& report, const ValidateOptions& options) {
  SamplerConfig config;
  config.epsilon_rule = EpsilonRule::kFixed;
  // ULA leaves a 1 / (1 - eps/2) variance bias; at eps = 0.05 that alone is
  // visible to KS with 10^5 samples.
  config.fixed_epsilon = 0.01;
  const StandardNormalScore score;
  const std::size_t batches = 10, chains = 10000;
  std::vector<double> pooled;
  pooled.reserve(batches * chains);
  for (std::size_t b = 0; b < batches; ++b) {
    NoiseBank noise = chain_noise(options.seed, chains, (2 << 20) + b * chains);
    Tensor x({chains, 1}, 2.0);
    for (int step = 0; step < 1500; ++step) corrector_step(x, 0.0, score, config, noise);
    pooled.insert(pooled.end(), x.data().begin(), x.data().end());
  }
  const double d = stats::ks_statistic(pooled, [](double v) { return stats::normal_cdf(v); });
  const double p = stats::ks_pvalue(d, pooled.size());
  add(report, "langevin_ks_pvalue", p, 1.0, 0.01, p > 0.01);
}

void check_gaussian_recovery(ValidationReport& report, const ValidateOptions& options) {
  const SdeSpec spec = SdeSpec::wide();
  const double mean = 0.1, var = 0.04;
  const GaussianTargetScore score(spec, mean, var);
  SamplerConfig config;
  config.n_steps = 1000;
  config.seed = options.seed + 3;
  const Generation g = generate(10000, 1, spec, score, config);
  const double m = stats::mean(g.samples.data());
  const double v = stats::variance(g.samples.data());
  add(report, "gaussian_recovery_mean", m, mean, 0.02, std::abs(m - mean) <= 0.02);
  add(report, "gaussian_recovery_variance", v, var, 0.05 * var,
      std::abs(v - var) <= 0.05 * var);
}

void check_dsm_esm(ValidationReport& report, const ValidateOptions& options) {
  const GaussianMixture data({{0.5, -1.0, 0.05}, {0.5, 1.0, 0.05}});
  ToyDsmConfig config;
  config.seed = options.seed + 7;
  DenseScoreModel model = train_toy_dsm(data, config);
  // DSM at noise sigma targets the score of the data convolved with N(0, sigma^2).
  const GaussianMixture perturbed = data.perturbed(config.sigma);
  RandomNoise noise(options.seed, 303);
  const double esm = esm_error([&](double x) { return model(x); }, perturbed, 20000, noise);
  add(report, "dsm_esm_error", esm, 0.0, 0.05, esm < 0.05);
}

ValidationReport run_validation(const ValidateOptions& options) {
  ValidationReport report;
  check_score_formula(report, options);
  check_moment_ode(report);
  check_forward_variance(report, options);
  check_langevin_stationarity(report, options);
  check_gaussian_recovery(report, options);
  check_dsm_esm(report, options);
  return report;
}

}  // namespace itowave
