#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "itowave/audio.hpp"
#include "itowave/nn/adam.hpp"
#include "itowave/noise.hpp"
#include "itowave/score_net.hpp"
#include "itowave/sde.hpp"

namespace itowave {

enum class LossNorm { kL1, kL2 };
enum class LossWeighting { kNone, kVariance };

struct TrainingConfig {
  int batch_size = 4;
  int segment_length = 16384;
  int max_steps = 100000;
  LossNorm loss_norm = LossNorm::kL2;
  LossWeighting loss_weighting = LossWeighting::kVariance;
  nn::AdamConfig adam;
  int checkpoint_every = 1000;
  std::uint64_t seed = 1234;

  /// Throws ConfigError; segment_length must be a multiple of `hop_length`.
  void validate(int hop_length) const;

  bool operator==(const TrainingConfig& o) const {
    return batch_size == o.batch_size && segment_length == o.segment_length &&
           max_steps == o.max_steps && loss_norm == o.loss_norm &&
           loss_weighting == o.loss_weighting && adam.learning_rate == o.adam.learning_rate &&
           adam.beta1 == o.adam.beta1 && adam.beta2 == o.adam.beta2 &&
           adam.epsilon == o.adam.epsilon && checkpoint_every == o.checkpoint_every &&
           seed == o.seed;
  }
};

/// A waveform with its hop-aligned mel (mel.n_frames * hop == samples.size()).
struct Clip {
  std::vector<double> samples;
  audio::MelSpectrogram mel;
};
using Dataset = std::vector<Clip>;

/// Builds a training clip from a waveform: crops to a multiple of `hop`, and
/// takes the aligned mel of the crop.
Clip make_clip(const audio::Waveform& wave, const audio::FeatureConfig& features);

struct TrainExample {
  std::vector<double> x0;
  audio::MelSpectrogram mel;
  double t = 0.0;
  std::vector<double> x_t;
  std::vector<double> target;
};

/// t ~ U[t_min, t_max], then x_t and target from sample_transition.
/// Throws DataError when len(x0) != mel.n_frames * hop.
TrainExample make_example(std::span<const double> x0, const audio::MelSpectrogram& mel,
                          const SdeSpec& spec, int hop_length, NoiseSource& noise);

/// Per-example loss weight: variance(t) for L2, sqrt(variance(t)) for L1
/// under kVariance; 1 under kNone.
double loss_weight(const SdeSpec& spec, double t, LossNorm norm, LossWeighting weighting);

/// Mean over batch and dimensions of w_b * 1/2 (pred - target)^2 (L2) or
/// w_b * |pred - target| (L1). prediction and target are [B, d]; one t per row.
nn::Var dsm_loss(nn::Var prediction, const nn::Tensor& target, std::span<const double> t,
                 const SdeSpec& spec, LossNorm norm, LossWeighting weighting);

/// Gradient-free evaluation of dsm_loss.
double dsm_loss_value(const nn::Tensor& prediction, const nn::Tensor& target,
                      std::span<const double> t, const SdeSpec& spec, LossNorm norm,
                      LossWeighting weighting);

struct TrainOptions {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::ostream* metrics = nullptr;       // tab-separated: step, loss, learning_rate, wall_ms
  int start_step = 0;                    // resume point; steps run in (start_step, max_steps]
  std::function<void(int step, double loss)> on_step;
  std::vector<nn::NamedTensor> extra_tensors;  // appended to every checkpoint
};

struct TrainResult {
  std::vector<double> losses;  // one per executed step
  int final_step = 0;
};

/// DSM training loop. Each step draws its randomness from (seed, step), so a
/// run resumed from a checkpoint reproduces the uninterrupted trajectory.
/// Throws ConfigError for an empty dataset, DataError when no clip is long
/// enough, NumericalError when the loss is non-finite or exceeds 1e6.
TrainResult train(const Dataset& data, ScoreNet& net, const SdeSpec& spec, TrainingConfig& config,
                  const TrainOptions& options = {});

/// Checkpoint tensors (parameters, Adam moments, step counter) as written by train().
std::vector<nn::NamedTensor> training_state(const ScoreNet& net, const nn::AdamConfig& adam);
/// Restores parameters and Adam state; returns the stored step.
int restore_training_state(ScoreNet& net, nn::AdamConfig& adam,
                           const std::vector<nn::NamedTensor>& tensors);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int step);
/// Highest-step `step_{N}.ckpt` in `dir`, or an empty path.
std::filesystem::path latest_checkpoint(const std::filesystem::path& dir);

// --- Toy densities and explicit score matching -----------------------------

/// 1-D density with an analytic score.
class ToyDensity {
 public:
  virtual ~ToyDensity() = default;
  virtual double sample(NoiseSource& noise) const = 0;
  virtual double log_density(double x) const = 0;
  virtual double score(double x) const = 0;
};

class GaussianDensity final : public ToyDensity {
 public:
  GaussianDensity(double mean, double variance);
  double sample(NoiseSource& noise) const override;
  double log_density(double x) const override;
  double score(double x) const override;
  double mean() const { return mean_; }
  double variance() const { return variance_; }

 private:
  double mean_, variance_;
};

class GaussianMixture final : public ToyDensity {
 public:
  struct Component {
    double weight, mean, variance;
  };
  explicit GaussianMixture(std::vector<Component> components);
  double sample(NoiseSource& noise) const override;
  double log_density(double x) const override;
  double score(double x) const override;
  /// The mixture convolved with N(0, sigma^2).
  GaussianMixture perturbed(double sigma) const;
  const std::vector<Component>& components() const { return components_; }

 private:
  std::vector<Component> components_;
};

/// Monte-Carlo estimate of E_{x~p} (S(x) - d/dx log p(x))^2.
double esm_error(const std::function<double(double)>& score_fn, const ToyDensity& density,
                 std::size_t samples, NoiseSource& noise);

/// Dense tanh network R -> R used for toy score-matching fits.
class DenseScoreModel {
 public:
  DenseScoreModel(int hidden, std::uint64_t seed);
  std::vector<nn::Parameter*> parameters();
  nn::Var forward(nn::Tape& tape, nn::Var x);  // x [B, 1] -> [B, 1]
  double operator()(double x);

 private:
  std::vector<nn::Parameter> params_;
};

struct ToyDsmConfig {
  double sigma = 0.5;
  int steps = 3000;
  int batch_size = 256;
  double learning_rate = 3e-3;
  int hidden = 32;
  std::uint64_t seed = 7;
};

/// DSM-trains a DenseScoreModel on `data` perturbed by N(0, sigma^2):
/// regress -(x~ - x) / sigma^2 at x~ = x + sigma xi.
DenseScoreModel train_toy_dsm(const ToyDensity& data, const ToyDsmConfig& config,
                              std::vector<double>* loss_trace = nullptr);

}  // namespace itowave
