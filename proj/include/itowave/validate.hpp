#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "itowave/sde.hpp"

namespace itowave {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double expected = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct ValidationReport {
  std::vector<CheckResult> checks;
  bool all_passed() const;
  /// Tab-separated table: check, measured, expected, tolerance, status.
  void print(std::ostream& out) const;
};

using TransitionScoreFn = std::function<std::vector<double>(
    const SdeSpec&, std::span<const double> x_t, std::span<const double> x0, double t)>;

struct ValidateOptions {
  std::uint64_t seed = 0;
  // Analytic transition score under test; tests swap in a broken one.
  TransitionScoreFn transition_score = score_of_transition;
};

// Individual checks. Each appends one or more rows.
/// 1000 random (x0, x_t, t) under the paper preset; analytic score vs central
/// differences of the log transition density, 1e-5 relative.
void check_score_formula(ValidationReport& report, const ValidateOptions& options);
/// Closed-form variance vs RK4 integration of dV/dt = g(t)^2 on 100 times, 1e-8 relative.
void check_moment_ode(ValidationReport& report);
/// Euler-Maruyama, N = 1000, 10^4 paths: variance at t = 0.25, 0.5, 1 within 5%.
void check_forward_variance(ValidationReport& report, const ValidateOptions& options);
/// Corrector-only chains with the N(0,1) score, 10^5 pooled samples, KS at alpha 0.01.
void check_langevin_stationarity(ValidationReport& report, const ValidateOptions& options);
/// Full sampler with the exact marginal score of N(0.1, 0.04), d = 1, N = 1000,
/// 10^4 chains: mean within 0.02, variance within 5%.
void check_gaussian_recovery(ValidationReport& report, const ValidateOptions& options);
/// Dense net DSM-trained on a two-Gaussian mixture at fixed noise; ESM error < 0.05.
void check_dsm_esm(ValidationReport& report, const ValidateOptions& options);

/// The whole battery in the order above.
ValidationReport run_validation(const ValidateOptions& options = {});

/// RK4 solution of the variance ODE at time t.
double integrate_moment_ode(const SdeSpec& spec, double t, int steps);

}  // namespace itowave
