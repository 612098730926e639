#include "itowave/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "itowave/errors.hpp"

namespace itowave {

using nn::Tensor;

namespace {

void check_bank(const Tensor& x, const NoiseBank& noise) {
  if (x.rank() != 2) throw ShapeError("sampler state must be [chains, d], got " +
                                      nn::shape_string(x.shape()));
  if (noise.size() != x.dim(0)) {
    throw ShapeError("noise bank has " + std::to_string(noise.size()) + " streams for " +
                     std::to_string(x.dim(0)) + " chains");
  }
}

Tensor eval_score(const ScoreModel& model, const Tensor& x, double t) {
  std::vector<double> times(x.dim(0), t);
  Tensor s = model.score(x, times);
  if (s.shape() != x.shape()) {
    throw ShapeError("score model returned " + nn::shape_string(s.shape()) + " for state " +
                     nn::shape_string(x.shape()));
  }
  return s;
}

std::set<int> snapshot_set(const std::vector<int>& steps, int n) {
  std::set<int> out(steps.begin(), steps.end());
  out.insert(n);
  return out;
}

}  // namespace

void SamplerConfig::validate() const {
  if (n_steps < 1) throw ConfigError("sample.n_steps must be >= 1");
  if (corrector_steps_per_iter < 0) throw ConfigError("sample.corrector_steps must be >= 0");
  if (!(snr > 0.0)) throw ConfigError("sample.snr must be > 0");
  if (!(fixed_epsilon > 0.0)) throw ConfigError("sample.fixed_epsilon must be > 0");
  for (int s : snapshot_steps) {
    if (s < 0 || s > n_steps) {
      throw ConfigError("snapshot step " + std::to_string(s) + " outside [0, " +
                        std::to_string(n_steps) + "]");
    }
  }
}

NoiseBank chain_noise(std::uint64_t seed, std::size_t n, std::uint64_t first) {
  NoiseBank bank;
  for (std::size_t i = 0; i < n; ++i) bank.push_back(std::make_unique<RandomNoise>(seed, first + i));
  return bank;
}

NoiseBank zero_noise(std::size_t n) {
  NoiseBank bank;
  for (std::size_t i = 0; i < n; ++i) bank.push_back(std::make_unique<ZeroNoise>());
  return bank;
}

const Snapshot* Trajectory::find(int step) const {
  for (const Snapshot& s : snapshots)
    if (s.step == step) return &s;
  return nullptr;
}

Trajectory forward_simulate(const SdeSpec& spec, const Tensor& x0, NoiseBank& noise,
                            const std::vector<int>& snapshot_steps) {
  spec.validate();
  check_bank(x0, noise);
  const int n = spec.n_steps;
  std::set<int> wanted = snapshot_set(snapshot_steps, n);
  wanted.insert(0);
  const double dt = spec.dt();
  const double sq_dt = std::sqrt(dt);
  const std::size_t chains = x0.dim(0), d = x0.dim(1);
  Tensor x = x0;
  Trajectory traj;
  traj.snapshots.push_back({0, x});
  for (int i = 0; i < n; ++i) {
    const double amp = diffusion_coeff(spec, std::min(i * dt, spec.t_max)) * sq_dt;
    for (std::size_t b = 0; b < chains; ++b) {
      double* row = x.ptr() + b * d;
      NoiseSource& src = *noise[b];
      for (std::size_t j = 0; j < d; ++j) row[j] += amp * src.normal();
    }
    if (wanted.count(i + 1)) traj.snapshots.push_back({i + 1, x});
  }
  return traj;
}

void predictor_step(Tensor& x, int k, int n_steps, const SdeSpec& spec, const ScoreModel& model,
                    NoiseBank& noise) {
  check_bank(x, noise);
  if (k < 0 || k >= n_steps) {
    throw DomainError("predictor index " + std::to_string(k) + " outside [0, " +
                      std::to_string(n_steps - 1) + "]");
  }
  const double dt = spec.t_max / n_steps;
  const double t = std::min((k + 1) * dt, spec.t_max);
  const Tensor s = eval_score(model, x, t);
  const double g2 = diffusion_coeff_sq(spec, t);
  const double amp = std::sqrt(g2 * dt);
  const std::size_t chains = x.dim(0), d = x.dim(1);
  for (std::size_t b = 0; b < chains; ++b) {
    NoiseSource& src = *noise[b];
    for (std::size_t j = 0; j < d; ++j) {
      const std::size_t i = b * d + j;
      x[i] += g2 * s[i] * dt + amp * src.normal();
    }
  }
}

double corrector_step(Tensor& x, double t, const ScoreModel& model, const SamplerConfig& config,
                      NoiseBank& noise) {
  check_bank(x, noise);
  const Tensor s = eval_score(model, x, t);
  const std::size_t chains = x.dim(0), d = x.dim(1);
  Tensor xi(x.shape());
  for (std::size_t b = 0; b < chains; ++b) noise[b]->fill_normal({xi.ptr() + b * d, d});

  double eps = config.fixed_epsilon;
  if (config.epsilon_rule == EpsilonRule::kSnrAdaptive) {
    double xi_norm = 0.0, s_norm = 0.0;
    for (std::size_t b = 0; b < chains; ++b) {
      double a = 0.0, c = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        a += xi[b * d + j] * xi[b * d + j];
        c += s[b * d + j] * s[b * d + j];
      }
      xi_norm += std::sqrt(a);
      s_norm += std::sqrt(c);
    }
    xi_norm /= static_cast<double>(chains);
    s_norm /= static_cast<double>(chains);
    if (s_norm > 0.0 && std::isfinite(s_norm)) {
      const double r = config.snr * xi_norm / s_norm;
      eps = 2.0 * r * r;
    }
  }
  const double amp = std::sqrt(2.0 * eps);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += eps * s[i] + amp * xi[i];
  return eps;
}

Generation generate_from(Tensor initial, const SdeSpec& spec, const ScoreModel& model,
                         const SamplerConfig& config, NoiseBank& noise) {
  spec.validate();
  config.validate();
  check_bank(initial, noise);
  const int n = config.n_steps;
  const double dt = spec.t_max / n;
  const std::set<int> wanted = snapshot_set(config.snapshot_steps, n);
  Generation out;
  Tensor& x = initial;
  if (!x.all_finite()) throw NumericalError("sampler: initial state contains NaN/Inf");
  if (wanted.count(0)) out.trajectory.snapshots.push_back({0, x});
  for (int k = n - 1; k >= 0; --k) {
    predictor_step(x, k, n, spec, model, noise);
    for (int c = 0; c < config.corrector_steps_per_iter; ++c) {
      corrector_step(x, k * dt, model, config, noise);
    }
    const int done = n - k;
    if (!x.all_finite()) {
      std::ostringstream msg;
      msg << "sampler: state became non-finite at iteration " << done << " of " << n
          << " (t = " << k * dt << ")";
      throw NumericalError(msg.str());
    }
    if (wanted.count(done)) out.trajectory.snapshots.push_back({done, x});
  }
  out.samples = std::move(x);
  return out;
}

Generation generate(std::size_t chains, std::size_t dim, const SdeSpec& spec,
                    const ScoreModel& model, const SamplerConfig& config) {
  if (chains == 0 || dim == 0) throw ShapeError("generate: chains and dim must be >= 1");
  NoiseBank noise = chain_noise(config.seed, chains);
  Tensor x({chains, dim});
  for (std::size_t b = 0; b < chains; ++b) {
    const std::vector<double> row = sample_prior(spec, dim, *noise[b]);
    std::copy(row.begin(), row.end(), x.ptr() + b * dim);
  }
  return generate_from(std::move(x), spec, model, config, noise);
}

GaussianTargetScore::GaussianTargetScore(const SdeSpec& spec, double mean, double variance)
    : spec_(spec), mean_(mean), variance_(variance) {
  if (!(variance > 0.0)) throw ConfigError("Gaussian target variance must be > 0");
}

Tensor GaussianTargetScore::score(const Tensor& x, std::span<const double> t) const {
  Tensor s(x.shape());
  const std::size_t d = x.size() / t.size();
  for (std::size_t b = 0; b < t.size(); ++b) {
    const double v = variance_ + transition_variance(spec_, t[b]);
    for (std::size_t j = 0; j < d; ++j) s[b * d + j] = -(x[b * d + j] - mean_) / v;
  }
  return s;
}

PointMassScore::PointMassScore(const SdeSpec& spec, std::vector<double> x0)
    : spec_(spec), x0_(std::move(x0)) {}

Tensor PointMassScore::score(const Tensor& x, std::span<const double> t) const {
  const std::size_t d = x0_.size();
  if (x.rank() != 2 || x.dim(1) != d) {
    throw ShapeError("point-mass score: state " + nn::shape_string(x.shape()) +
                     " does not match dimension " + std::to_string(d));
  }
  Tensor s(x.shape());
  for (std::size_t b = 0; b < t.size(); ++b) {
    const double v = clamped_variance(spec_, t[b]);
    for (std::size_t j = 0; j < d; ++j) s[b * d + j] = -(x[b * d + j] - x0_[j]) / v;
  }
  return s;
}

Tensor StandardNormalScore::score(const Tensor& x, std::span<const double>) const {
  Tensor s(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) s[i] = -x[i];
  return s;
}

Tensor ZeroScore::score(const Tensor& x, std::span<const double>) const {
  return Tensor(x.shape());
}

SignalStats signal_stats(std::span<const double> x) {
  SignalStats st;
  if (x.empty()) return st;
  st.min = *std::min_element(x.begin(), x.end());
  st.max = *std::max_element(x.begin(), x.end());
  double sq = 0.0;
  for (double v : x) sq += v * v;
  st.rms = std::sqrt(sq / static_cast<double>(x.size()));
  if (x.size() > 1) {
    double dq = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i) dq += (x[i] - x[i - 1]) * (x[i] - x[i - 1]);
    st.hf_rms = std::sqrt(dq / static_cast<double>(x.size() - 1));
  }
  return st;
}

}  // namespace itowave
