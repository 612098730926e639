#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "itowave/nn/tensor.hpp"
#include "itowave/noise.hpp"
#include "itowave/score_model.hpp"
#include "itowave/sde.hpp"

namespace itowave {

enum class EpsilonRule { kSnrAdaptive, kFixed };

struct SamplerConfig {
  int n_steps = 1000;
  int corrector_steps_per_iter = 1;
  double snr = 0.16;
  EpsilonRule epsilon_rule = EpsilonRule::kSnrAdaptive;
  double fixed_epsilon = 1e-6;
  std::uint64_t seed = 0;
  // Completed reverse iterations at which to record the state: 0 is the
  // initial draw, n_steps the generated signal.
  std::vector<int> snapshot_steps;

  void validate() const;
  bool operator==(const SamplerConfig&) const = default;
};

/// One noise stream per chain (batch row).
using NoiseBank = std::vector<std::unique_ptr<NoiseSource>>;
/// RandomNoise(seed, first + i) for i = 0..n-1.
NoiseBank chain_noise(std::uint64_t seed, std::size_t n, std::uint64_t first = 0);
NoiseBank zero_noise(std::size_t n);

struct Snapshot {
  int step = 0;
  nn::Tensor state;  // [chains, d]
};

struct Trajectory {
  std::vector<Snapshot> snapshots;  // ascending step
  const Snapshot* find(int step) const;
};

/// Euler-Maruyama on the forward SDE over spec.n_steps steps:
/// x += g(i dt) sqrt(dt) xi. x0 is [chains, d]; the result always holds
/// step 0 and step n_steps plus any requested forward steps.
Trajectory forward_simulate(const SdeSpec& spec, const nn::Tensor& x0, NoiseBank& noise,
                            const std::vector<int>& snapshot_steps = {});

/// Reverse-SDE step from t_{k+1} = (k+1) dt to t_k, dt = t_max / n_steps:
/// x += g(t_{k+1})^2 score dt + g(t_{k+1}) sqrt(dt) xi.
void predictor_step(nn::Tensor& x, int k, int n_steps, const SdeSpec& spec,
                    const ScoreModel& model, NoiseBank& noise);

/// Langevin update x += eps score(x, t) + sqrt(2 eps) xi. Under kSnrAdaptive
/// eps = 2 (snr |xi| / |score|)^2 with both norms averaged over chains; a zero
/// score norm falls back to fixed_epsilon. Returns the eps used.
double corrector_step(nn::Tensor& x, double t, const ScoreModel& model,
                      const SamplerConfig& config, NoiseBank& noise);

struct Generation {
  nn::Tensor samples;  // [chains, d]
  Trajectory trajectory;
};

/// Predictor then corrector(s) for k = N-1 .. 0, starting from `initial`.
/// Throws NumericalError naming the iteration when the state goes non-finite.
Generation generate_from(nn::Tensor initial, const SdeSpec& spec, const ScoreModel& model,
                         const SamplerConfig& config, NoiseBank& noise);

/// Draws `chains` initial states from N(0, sigma1^2 I) with the chain streams
/// of config.seed, then runs generate_from.
Generation generate(std::size_t chains, std::size_t dim, const SdeSpec& spec,
                    const ScoreModel& model, const SamplerConfig& config);

// --- analytic stand-ins -------------------------------------------------------

/// Exact marginal score when the data is N(mean, variance) per dimension.
class GaussianTargetScore final : public ScoreModel {
 public:
  GaussianTargetScore(const SdeSpec& spec, double mean, double variance);
  nn::Tensor score(const nn::Tensor& x, std::span<const double> t) const override;

 private:
  SdeSpec spec_;
  double mean_, variance_;
};

/// Transition score of a point mass at x0; t is clamped to t_min.
class PointMassScore final : public ScoreModel {
 public:
  PointMassScore(const SdeSpec& spec, std::vector<double> x0);
  nn::Tensor score(const nn::Tensor& x, std::span<const double> t) const override;

 private:
  SdeSpec spec_;
  std::vector<double> x0_;
};

/// score(x, t) = -x, whatever t.
class StandardNormalScore final : public ScoreModel {
 public:
  nn::Tensor score(const nn::Tensor& x, std::span<const double> t) const override;
};

class ZeroScore final : public ScoreModel {
 public:
  nn::Tensor score(const nn::Tensor& x, std::span<const double> t) const override;
};

struct SignalStats {
  double rms = 0.0, min = 0.0, max = 0.0;
  double hf_rms = 0.0;  // RMS of the first difference
};
SignalStats signal_stats(std::span<const double> x);

}  // namespace itowave
