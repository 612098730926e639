#include "itowave/sde.hpp"

#include <algorithm>
#include <numbers>
#include <sstream>

#include "itowave/errors.hpp"

namespace itowave {

namespace {

void check_time(const SdeSpec& spec, double t) {
  if (!(t >= 0.0 && t <= spec.t_max)) {
    std::ostringstream msg;
    msg << "diffusion time " << t << " outside [0, " << spec.t_max << "]";
    throw DomainError(msg.str());
  }
}

void check_score_time(const SdeSpec& spec, double t) {
  check_time(spec, t);
  if (t < spec.t_min) {
    std::ostringstream msg;
    msg << "diffusion time " << t << " below t_min = " << spec.t_min
        << " (transition variance too close to zero)";
    throw DomainError(msg.str());
  }
}

void check_same_size(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError("dimension mismatch: " + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()));
  }
}

}  // namespace

SdeSpec SdeSpec::paper() {
  SdeSpec s;
  s.sigma0 = 0.01;
  s.sigma1 = 0.01 * std::exp(0.5);
  return s;
}

SdeSpec SdeSpec::wide() {
  SdeSpec s;
  s.sigma0 = 0.01;
  s.sigma1 = 1.0;
  return s;
}

void SdeSpec::validate() const {
  if (!(sigma0 > 0.0) || !std::isfinite(sigma0)) throw ConfigError("sde.sigma0 must be > 0");
  if (!(sigma1 > sigma0) || !std::isfinite(sigma1)) {
    throw ConfigError("sde.sigma1 must be > sde.sigma0");
  }
  if (!(t_max > 0.0) || !std::isfinite(t_max)) throw ConfigError("sde.t_max must be > 0");
  if (!(t_min > 0.0 && t_min < t_max)) throw ConfigError("sde.t_min must lie in (0, t_max)");
  if (n_steps < 1) throw ConfigError("sde.n_steps must be >= 1");
  const double step = dt();
  if (!(step > 0.0) || !std::isfinite(step)) throw ConfigError("sde step size is not finite");
}

VeSde::VeSde(const SdeSpec& spec) : spec_(spec) { spec_.validate(); }

void VeSde::drift(std::span<const double> x, double t, std::span<double> out) const {
  check_time(spec_, t);
  check_same_size(x, out);
  std::fill(out.begin(), out.end(), 0.0);
}

double VeSde::diffusion_coeff(double t) const { return itowave::diffusion_coeff(spec_, t); }

TransitionMoments VeSde::transition_moments(double t) const {
  return itowave::transition_moments(spec_, t);
}

std::vector<double> drift(const SdeSpec& spec, std::span<const double> x, double t) {
  check_time(spec, t);
  return std::vector<double>(x.size(), 0.0);
}

double diffusion_coeff(const SdeSpec& spec, double t) {
  check_time(spec, t);
  const double lr = spec.log_ratio();
  return spec.sigma0 * std::exp(t * lr) * std::sqrt(2.0 * lr);
}

double diffusion_coeff_sq(const SdeSpec& spec, double t) {
  check_time(spec, t);
  const double lr = spec.log_ratio();
  return 2.0 * spec.sigma0 * spec.sigma0 * std::exp(2.0 * t * lr) * lr;
}

TransitionMoments transition_moments(const SdeSpec& spec, double t) {
  check_time(spec, t);
  // expm1 keeps full relative precision for t near 0.
  const double variance = spec.sigma0 * spec.sigma0 * std::expm1(2.0 * t * spec.log_ratio());
  return {1.0, variance};
}

double clamped_variance(const SdeSpec& spec, double t) {
  return transition_variance(spec, std::max(t, spec.t_min));
}

TransitionSample sample_transition(const SdeSpec& spec, std::span<const double> x0, double t,
                                   NoiseSource& noise) {
  check_score_time(spec, t);
  const double var = transition_variance(spec, t);
  const double std_dev = std::sqrt(var);
  TransitionSample out;
  out.x_t.resize(x0.size());
  out.target_score.resize(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    const double xi = noise.normal();
    out.x_t[i] = x0[i] + std_dev * xi;
    out.target_score[i] = -(out.x_t[i] - x0[i]) / var;
  }
  return out;
}

std::vector<double> score_of_transition(const SdeSpec& spec, std::span<const double> x_t,
                                        std::span<const double> x0, double t) {
  check_score_time(spec, t);
  check_same_size(x_t, x0);
  const double var = transition_variance(spec, t);
  std::vector<double> score(x_t.size());
  for (std::size_t i = 0; i < x_t.size(); ++i) score[i] = -(x_t[i] - x0[i]) / var;
  return score;
}

double log_transition_density(const SdeSpec& spec, std::span<const double> x_t,
                              std::span<const double> x0, double t) {
  check_score_time(spec, t);
  check_same_size(x_t, x0);
  const double var = transition_variance(spec, t);
  double sq = 0.0;
  for (std::size_t i = 0; i < x_t.size(); ++i) sq += (x_t[i] - x0[i]) * (x_t[i] - x0[i]);
  const double d = static_cast<double>(x_t.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi * var) - sq / (2.0 * var);
}

std::vector<double> sample_prior(const SdeSpec& spec, std::size_t d, NoiseSource& noise) {
  if (d == 0) throw ShapeError("prior dimension must be >= 1");
  std::vector<double> x(d);
  for (double& v : x) v = spec.sigma1 * noise.normal();
  return x;
}

double log_prior(const SdeSpec& spec, std::span<const double> x) {
  double sq = 0.0;
  for (double v : x) sq += v * v;
  const double s2 = spec.sigma1 * spec.sigma1;
  const double d = static_cast<double>(x.size());
  return -0.5 * d * std::log(2.0 * std::numbers::pi * s2) - sq / (2.0 * s2);
}

std::vector<double> prior_score(const SdeSpec& spec, std::span<const double> x) {
  const double s2 = spec.sigma1 * spec.sigma1;
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = -x[i] / s2;
  return g;
}

}  // namespace itowave
