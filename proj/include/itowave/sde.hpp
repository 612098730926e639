#pragma once

#include <cmath>
#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "itowave/noise.hpp"

namespace itowave {

/// Parameters of the variance-exploding SDE
///   dX = sigma0 (sigma1/sigma0)^t sqrt(2 ln(sigma1/sigma0)) dW,   0 <= t <= t_max.
/// All schedule math (g(t), transition variance, step size) derives from here.
struct SdeSpec {
  double sigma0 = 0.01;
  double sigma1 = 1.0;
  double t_max = 1.0;
  double t_min = 1e-5;
  int n_steps = 1000;

  /// sigma1 = sigma0 * sqrt(e), i.e. 2 ln(sigma1/sigma0) = 1.
  static SdeSpec paper();
  /// sigma1 = 1: a prior wide enough to cover normalized audio.
  static SdeSpec wide();

  double dt() const { return t_max / n_steps; }
  double log_ratio() const { return std::log(sigma1 / sigma0); }

  /// Throws ConfigError naming the first violated invariant.
  void validate() const;

  bool operator==(const SdeSpec&) const = default;
};

struct TransitionMoments {
  double mean_shift = 1.0;  // multiplier on x(0)
  double variance = 0.0;    // per-dimension variance of p(x(t) | x(0))
};

/// A linear SDE dX = f(X, t) dt + g(t) dW with Gaussian transitions.
/// Only the VE instance ships; other schedules implement the same surface.
class LinearSde {
 public:
  virtual ~LinearSde() = default;
  virtual double t_max() const = 0;
  virtual void drift(std::span<const double> x, double t, std::span<double> out) const = 0;
  virtual double diffusion_coeff(double t) const = 0;
  virtual TransitionMoments transition_moments(double t) const = 0;
};

class VeSde final : public LinearSde {
 public:
  explicit VeSde(const SdeSpec& spec);

  const SdeSpec& spec() const { return spec_; }
  double t_max() const override { return spec_.t_max; }
  void drift(std::span<const double> x, double t, std::span<double> out) const override;
  double diffusion_coeff(double t) const override;
  TransitionMoments transition_moments(double t) const override;

 private:
  SdeSpec spec_;
};

// Free-function surface over the VE SDE. All check 0 <= t <= t_max and throw
// DomainError otherwise.

std::vector<double> drift(const SdeSpec& spec, std::span<const double> x, double t);

/// g(t) = sigma0 (sigma1/sigma0)^t sqrt(2 ln(sigma1/sigma0)).
double diffusion_coeff(const SdeSpec& spec, double t);

/// g(t)^2 = 2 sigma0^2 (sigma1/sigma0)^(2t) ln(sigma1/sigma0).
double diffusion_coeff_sq(const SdeSpec& spec, double t);

/// mean_shift = 1, variance = sigma0^2 ((sigma1/sigma0)^(2t) - 1).
TransitionMoments transition_moments(const SdeSpec& spec, double t);

inline double transition_variance(const SdeSpec& spec, double t) {
  return transition_moments(spec, t).variance;
}

/// Variance at max(t, t_min); used wherever a score must stay finite at t = 0.
double clamped_variance(const SdeSpec& spec, double t);

struct TransitionSample {
  std::vector<double> x_t;
  std::vector<double> target_score;
};

/// Draws x_t = x0 + sqrt(variance(t)) xi and the matching score target
/// -(x_t - x0) / variance(t). Requires t >= t_min.
TransitionSample sample_transition(const SdeSpec& spec, std::span<const double> x0, double t,
                                   NoiseSource& noise);

/// -(x_t - x0) / variance(t). Requires t >= t_min.
std::vector<double> score_of_transition(const SdeSpec& spec, std::span<const double> x_t,
                                        std::span<const double> x0, double t);

/// log N(x_t; x0, variance(t) I).
double log_transition_density(const SdeSpec& spec, std::span<const double> x_t,
                              std::span<const double> x0, double t);

std::vector<double> sample_prior(const SdeSpec& spec, std::size_t d, NoiseSource& noise);

/// -(d/2) ln(2 pi sigma1^2) - |x|^2 / (2 sigma1^2).
double log_prior(const SdeSpec& spec, std::span<const double> x);

/// -x / sigma1^2.
std::vector<double> prior_score(const SdeSpec& spec, std::span<const double> x);

}  // namespace itowave
