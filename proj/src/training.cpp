#include "itowave/training.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <ostream>
#include <regex>
#include <sstream>

#include "itowave/errors.hpp"
#include "itowave/nn/ops.hpp"

namespace itowave {

using nn::Tape;
using nn::Tensor;
using nn::Var;

namespace {

constexpr double kDivergenceLimit = 1e6;
constexpr const char* kStepTensor = "__train_step";
constexpr const char* kAdamStepTensor = "__adam_step";

std::size_t uniform_index(NoiseSource& noise, std::size_t n) {
  const auto i = static_cast<std::size_t>(noise.uniform(0.0, static_cast<double>(n)));
  return std::min(i, n - 1);
}

// [B, mel_bins, F] channels-first batch from frame-major mels.
Tensor mel_batch(const std::vector<const audio::MelSpectrogram*>& mels) {
  const std::size_t batch = mels.size(), n_mels = mels[0]->n_mels, frames = mels[0]->n_frames;
  Tensor out({batch, n_mels, frames});
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t f = 0; f < frames; ++f)
      for (std::size_t m = 0; m < n_mels; ++m) out.at(b, m, f) = mels[b]->at(f, m);
  return out;
}

}  // namespace

void TrainingConfig::validate(int hop_length) const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (segment_length < 1) throw ConfigError("train.segment_length must be >= 1");
  if (segment_length % hop_length != 0) {
    throw ConfigError("train.segment_length " + std::to_string(segment_length) +
                      " is not a multiple of feature.hop_length " + std::to_string(hop_length));
  }
  if (max_steps < 1) throw ConfigError("train.max_steps must be >= 1");
  if (checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
  adam.validate();
}

Clip make_clip(const audio::Waveform& wave, const audio::FeatureConfig& features) {
  const std::size_t hop = features.hop_length;
  const std::size_t frames = wave.samples.size() / hop;
  if (frames == 0) {
    throw DataError("clip of " + std::to_string(wave.samples.size()) +
                    " samples is shorter than one hop");
  }
  Clip clip;
  clip.mel = audio::mel_spectrogram(wave, features).aligned();
  clip.samples.assign(wave.samples.begin(), wave.samples.begin() + static_cast<long>(frames * hop));
  return clip;
}

TrainExample make_example(std::span<const double> x0, const audio::MelSpectrogram& mel,
                          const SdeSpec& spec, int hop_length, NoiseSource& noise) {
  if (x0.size() != mel.n_frames * static_cast<std::size_t>(hop_length)) {
    throw DataError("waveform of " + std::to_string(x0.size()) + " samples is not aligned with " +
                    std::to_string(mel.n_frames) + " mel frames x hop " +
                    std::to_string(hop_length) + " = " +
                    std::to_string(mel.n_frames * hop_length) + " samples");
  }
  TrainExample ex;
  ex.x0.assign(x0.begin(), x0.end());
  ex.mel = mel;
  ex.t = noise.uniform(spec.t_min, spec.t_max);
  TransitionSample s = sample_transition(spec, x0, ex.t, noise);
  ex.x_t = std::move(s.x_t);
  ex.target = std::move(s.target_score);
  return ex;
}

double loss_weight(const SdeSpec& spec, double t, LossNorm norm, LossWeighting weighting) {
  if (weighting == LossWeighting::kNone) return 1.0;
  const double var = clamped_variance(spec, t);
  return norm == LossNorm::kL2 ? var : std::sqrt(var);
}

Var dsm_loss(Var prediction, const Tensor& target, std::span<const double> t, const SdeSpec& spec,
             LossNorm norm, LossWeighting weighting) {
  const Tensor& pv = prediction.value();
  if (pv.shape() != target.shape()) {
    throw ShapeError("dsm_loss: prediction " + nn::shape_string(pv.shape()) + " vs target " +
                     nn::shape_string(target.shape()));
  }
  if (pv.rank() < 1 || pv.dim(0) != t.size()) {
    throw ShapeError("dsm_loss: " + std::to_string(t.size()) + " times for batch " +
                     nn::shape_string(pv.shape()));
  }
  if (!pv.all_finite()) throw NumericalError("dsm_loss: prediction contains NaN/Inf");
  std::vector<double> w(t.size());
  for (std::size_t b = 0; b < t.size(); ++b) w[b] = loss_weight(spec, t[b], norm, weighting);
  Var diff = nn::sub(prediction, prediction.tape()->constant(target));
  Var per = norm == LossNorm::kL2 ? nn::scale(nn::square(diff), 0.5) : nn::abs(diff);
  return nn::mean(nn::scale_batch(per, w));
}

double dsm_loss_value(const Tensor& prediction, const Tensor& target, std::span<const double> t,
                      const SdeSpec& spec, LossNorm norm, LossWeighting weighting) {
  Tape tape(nn::GradMode::kDisabled);
  return dsm_loss(tape.constant(prediction), target, t, spec, norm, weighting).value()[0];
}

std::vector<nn::NamedTensor> training_state(const ScoreNet& net, const nn::AdamConfig& adam) {
  std::vector<nn::NamedTensor> out = net.state(true);
  out.push_back({kAdamStepTensor, Tensor::scalar(static_cast<double>(adam.step_count))});
  return out;
}

int restore_training_state(ScoreNet& net, nn::AdamConfig& adam,
                           const std::vector<nn::NamedTensor>& tensors) {
  net.load_state(tensors);
  int step = 0;
  for (const nn::NamedTensor& t : tensors) {
    if (t.name == kAdamStepTensor) adam.step_count = static_cast<std::int64_t>(t.value[0]);
    if (t.name == kStepTensor) step = static_cast<int>(t.value[0]);
  }
  return step;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int step) {
  return dir / ("step_" + std::to_string(step) + ".ckpt");
}

std::filesystem::path latest_checkpoint(const std::filesystem::path& dir) {
  std::filesystem::path best;
  long best_step = -1;
  if (!std::filesystem::is_directory(dir)) return best;
  const std::regex pattern(R"(step_(\d+)\.ckpt)");
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    std::smatch m;
    const std::string name = entry.path().filename().string();
    if (std::regex_match(name, m, pattern)) {
      const long s = std::stol(m[1]);
      if (s > best_step) {
        best_step = s;
        best = entry.path();
      }
    }
  }
  return best;
}

TrainResult train(const Dataset& data, ScoreNet& net, const SdeSpec& spec, TrainingConfig& config,
                  const TrainOptions& options) {
  const int hop = net.config().hop_length();
  config.validate(hop);
  spec.validate();
  if (data.empty()) throw ConfigError("training dataset is empty");
  const std::size_t seg = config.segment_length;
  const std::size_t seg_frames = seg / hop;
  std::vector<const Clip*> usable;
  for (const Clip& c : data) {
    if (c.samples.size() != c.mel.n_frames * static_cast<std::size_t>(hop)) {
      throw DataError("clip of " + std::to_string(c.samples.size()) +
                      " samples is not aligned with its " + std::to_string(c.mel.n_frames) +
                      " mel frames");
    }
    if (c.samples.size() >= seg) usable.push_back(&c);
  }
  if (usable.empty()) {
    throw DataError("no clip is at least train.segment_length = " + std::to_string(seg) +
                    " samples long");
  }
  if (!options.checkpoint_dir.empty()) std::filesystem::create_directories(options.checkpoint_dir);

  std::vector<nn::Parameter*> params = net.parameters();
  const std::size_t batch = config.batch_size;
  TrainResult result;
  result.final_step = options.start_step;
  const auto t0 = std::chrono::steady_clock::now();

  for (int step = options.start_step + 1; step <= config.max_steps; ++step) {
    RandomNoise noise(config.seed, static_cast<std::uint64_t>(step));
    std::vector<TrainExample> examples;
    examples.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
      const Clip& clip = *usable[uniform_index(noise, usable.size())];
      const std::size_t frame0 = uniform_index(noise, clip.mel.n_frames - seg_frames + 1);
      std::span<const double> x0(clip.samples.data() + frame0 * hop, seg);
      examples.push_back(make_example(x0, clip.mel.slice(frame0, seg_frames), spec, hop, noise));
    }
    Tensor x_t({batch, seg}), target({batch, seg});
    std::vector<double> times(batch);
    std::vector<const audio::MelSpectrogram*> mels;
    for (std::size_t b = 0; b < batch; ++b) {
      std::copy(examples[b].x_t.begin(), examples[b].x_t.end(), x_t.ptr() + b * seg);
      std::copy(examples[b].target.begin(), examples[b].target.end(), target.ptr() + b * seg);
      times[b] = examples[b].t;
      mels.push_back(&examples[b].mel);
    }

    for (nn::Parameter* p : params) p->zero_grad();
    Tape tape;
    Var pred = net.forward(tape, tape.constant(std::move(x_t)), times,
                           tape.constant(mel_batch(mels)));
    if (!pred.value().all_finite()) {
      throw NumericalError("training step " + std::to_string(step) +
                           ": score network produced NaN/Inf");
    }
    Var loss = dsm_loss(pred, target, times, spec, config.loss_norm, config.loss_weighting);
    const double loss_value = loss.value()[0];
    if (!std::isfinite(loss_value) || loss_value > kDivergenceLimit) {
      std::ostringstream msg;
      msg << "training diverged at step " << step << ": loss = " << loss_value;
      throw NumericalError(msg.str());
    }
    tape.backward(loss);
    nn::adam_step(params, config.adam);

    result.losses.push_back(loss_value);
    result.final_step = step;
    if (options.metrics) {
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::steady_clock::now() - t0)
                          .count();
      std::ostringstream line;
      line.precision(17);
      line << step << '\t' << loss_value << '\t' << config.adam.learning_rate << '\t' << ms
           << '\n';
      *options.metrics << line.str() << std::flush;
    }
    if (options.on_step) options.on_step(step, loss_value);
    if (!options.checkpoint_dir.empty() &&
        (step % config.checkpoint_every == 0 || step == config.max_steps)) {
      std::vector<nn::NamedTensor> state = training_state(net, config.adam);
      state.push_back({kStepTensor, Tensor::scalar(step)});
      state.insert(state.end(), options.extra_tensors.begin(), options.extra_tensors.end());
      nn::save_checkpoint(checkpoint_path(options.checkpoint_dir, step), state);
    }
  }
  return result;
}

// --- toy densities ----------------------------------------------------------

GaussianDensity::GaussianDensity(double mean, double variance) : mean_(mean), variance_(variance) {
  if (!(variance > 0.0)) throw ConfigError("Gaussian variance must be > 0");
}

double GaussianDensity::sample(NoiseSource& noise) const {
  return mean_ + std::sqrt(variance_) * noise.normal();
}

double GaussianDensity::log_density(double x) const {
  const double d = x - mean_;
  return -0.5 * std::log(2.0 * std::numbers::pi * variance_) - d * d / (2.0 * variance_);
}

double GaussianDensity::score(double x) const { return -(x - mean_) / variance_; }

GaussianMixture::GaussianMixture(std::vector<Component> components)
    : components_(std::move(components)) {
  if (components_.empty()) throw ConfigError("mixture needs at least one component");
  double total = 0.0;
  for (const Component& c : components_) {
    if (!(c.weight > 0.0) || !(c.variance > 0.0)) {
      throw ConfigError("mixture weights and variances must be > 0");
    }
    total += c.weight;
  }
  for (Component& c : components_) c.weight /= total;
}

double GaussianMixture::sample(NoiseSource& noise) const {
  double u = noise.uniform(0.0, 1.0);
  const Component* pick = &components_.back();
  for (const Component& c : components_) {
    if (u < c.weight) {
      pick = &c;
      break;
    }
    u -= c.weight;
  }
  return pick->mean + std::sqrt(pick->variance) * noise.normal();
}

double GaussianMixture::log_density(double x) const {
  // log-sum-exp over components.
  std::vector<double> terms;
  double hi = -INFINITY;
  for (const Component& c : components_) {
    const double d = x - c.mean;
    const double v = std::log(c.weight) - 0.5 * std::log(2.0 * std::numbers::pi * c.variance) -
                     d * d / (2.0 * c.variance);
    terms.push_back(v);
    hi = std::max(hi, v);
  }
  double s = 0.0;
  for (double v : terms) s += std::exp(v - hi);
  return hi + std::log(s);
}

double GaussianMixture::score(double x) const {
  // Posterior-weighted component scores.
  const double lp = log_density(x);
  double g = 0.0;
  for (const Component& c : components_) {
    const double d = x - c.mean;
    const double lc = std::log(c.weight) - 0.5 * std::log(2.0 * std::numbers::pi * c.variance) -
                      d * d / (2.0 * c.variance);
    g += std::exp(lc - lp) * (-d / c.variance);
  }
  return g;
}

GaussianMixture GaussianMixture::perturbed(double sigma) const {
  std::vector<Component> out = components_;
  for (Component& c : out) c.variance += sigma * sigma;
  return GaussianMixture(std::move(out));
}

double esm_error(const std::function<double(double)>& score_fn, const ToyDensity& density,
                 std::size_t samples, NoiseSource& noise) {
  if (samples == 0) throw ConfigError("esm_error needs at least one sample");
  double acc = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double x = density.sample(noise);
    const double e = score_fn(x) - density.score(x);
    acc += e * e;
  }
  return acc / static_cast<double>(samples);
}

DenseScoreModel::DenseScoreModel(int hidden, std::uint64_t seed) {
  const std::size_t h = hidden;
  params_.reserve(6);
  params_.emplace_back("fc0.weight", Tensor({h, 1}));
  params_.emplace_back("fc0.bias", Tensor({h}));
  params_.emplace_back("fc1.weight", Tensor({h, h}));
  params_.emplace_back("fc1.bias", Tensor({h}));
  params_.emplace_back("fc2.weight", Tensor({1, h}));
  params_.emplace_back("fc2.bias", Tensor({1}));
  RandomNoise rng(seed, 0xd5e);
  auto init = [&](std::size_t idx, double fan_in) {
    const double bound = std::sqrt(6.0 / fan_in);
    for (double& v : params_[idx].value.data()) v = rng.uniform(-bound, bound);
  };
  init(0, 1.0);
  init(2, static_cast<double>(h));
  init(4, static_cast<double>(h));
}

std::vector<nn::Parameter*> DenseScoreModel::parameters() {
  std::vector<nn::Parameter*> out;
  for (nn::Parameter& p : params_) out.push_back(&p);
  return out;
}

Var DenseScoreModel::forward(Tape& tape, Var x) {
  auto p = [&](std::size_t i) { return tape.parameter(params_[i]); };
  Var h = nn::tanh(nn::linear(x, p(0), p(1)));
  h = nn::tanh(nn::linear(h, p(2), p(3)));
  return nn::linear(h, p(4), p(5));
}

double DenseScoreModel::operator()(double x) {
  Tape tape(nn::GradMode::kDisabled);
  return forward(tape, tape.constant(Tensor({1, 1}, {x}))).value()[0];
}

DenseScoreModel train_toy_dsm(const ToyDensity& data, const ToyDsmConfig& config,
                              std::vector<double>* loss_trace) {
  DenseScoreModel model(config.hidden, config.seed);
  std::vector<nn::Parameter*> params = model.parameters();
  nn::AdamConfig adam;
  adam.learning_rate = config.learning_rate;
  const std::size_t batch = config.batch_size;
  const double s2 = config.sigma * config.sigma;
  RandomNoise noise(config.seed, 1);
  for (int step = 0; step < config.steps; ++step) {
    Tensor x({batch, 1}), target({batch, 1});
    for (std::size_t b = 0; b < batch; ++b) {
      const double clean = data.sample(noise);
      const double noisy = clean + config.sigma * noise.normal();
      x[b] = noisy;
      target[b] = -(noisy - clean) / s2;
    }
    for (nn::Parameter* p : params) p->zero_grad();
    Tape tape;
    Var pred = model.forward(tape, tape.constant(std::move(x)));
    Var diff = nn::sub(pred, tape.constant(std::move(target)));
    Var loss = nn::mean(nn::scale(nn::square(diff), 0.5));
    if (loss_trace) loss_trace->push_back(loss.value()[0]);
    tape.backward(loss);
    nn::adam_step(params, adam);
  }
  return model;
}

}  // namespace itowave
