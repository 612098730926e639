#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "itowave/errors.hpp"
#include "itowave/nn/checkpoint.hpp"
#include "itowave/nn/ops.hpp"
#include "itowave/stats.hpp"
#include "itowave/training.hpp"

using namespace itowave;
using nn::Tape;
using nn::Tensor;
namespace fs = std::filesystem;

namespace {

audio::MelSpectrogram fake_mel(std::size_t frames) {
  audio::MelSpectrogram m;
  m.n_frames = frames;
  m.n_mels = 80;
  m.values.assign(frames * 80, -3.0);
  m.config_fingerprint = audio::FeatureConfig{}.fingerprint();
  return m;
}

double time_for_variance(const SdeSpec& s, double var) {
  return std::log1p(var / (s.sigma0 * s.sigma0)) / (2.0 * s.log_ratio());
}

Clip the_clip() { return make_clip(audio::read_wav(ITOWAVE_CLIP, 22050), audio::FeatureConfig{}); }

TrainingConfig small_run(int steps) {
  TrainingConfig c;
  c.batch_size = 2;
  c.segment_length = 512;
  c.max_steps = steps;
  c.adam.learning_rate = 1e-3;
  c.checkpoint_every = 1000;
  c.seed = 17;
  return c;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "itowave_test_training" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("config validation") {
  TrainingConfig c;
  CHECK_NOTHROW(c.validate(256));
  c.segment_length = 1000;
  CHECK_THROWS_AS(c.validate(256), ConfigError);
  c = TrainingConfig{};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(256), ConfigError);
}

TEST_CASE("make_example") {
  const SdeSpec spec = SdeSpec::wide();
  std::vector<double> x0(512);
  for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = std::sin(0.01 * i);
  const audio::MelSpectrogram mel = fake_mel(2);

  ZeroNoise zero;
  const TrainExample z = make_example(x0, mel, spec, 256, zero);
  CHECK(z.x_t == x0);
  for (double v : z.target) CHECK(v == 0.0);
  CHECK(z.t == doctest::Approx(0.5 * (spec.t_min + spec.t_max)));

  RandomNoise noise(5);
  const TrainExample e = make_example(x0, mel, spec, 256, noise);
  CHECK(e.target == score_of_transition(spec, e.x_t, e.x0, e.t));
  CHECK(e.mel.values == mel.values);

  CHECK_THROWS_AS(make_example(std::span(x0).first(500), mel, spec, 256, noise), DataError);
  try {
    make_example(std::span(x0).first(500), mel, spec, 256, noise);
  } catch (const DataError& err) {
    const std::string msg = err.what();
    CHECK(msg.find("500") != std::string::npos);
    CHECK(msg.find("512") != std::string::npos);
  }
}

TEST_CASE("t is uniform on [t_min, t_max]") {
  const SdeSpec spec = SdeSpec::wide();
  const std::vector<double> x0(256, 0.0);
  const audio::MelSpectrogram mel = fake_mel(1);
  RandomNoise noise(9);
  std::vector<double> ts;
  for (int i = 0; i < 100000; ++i) ts.push_back(make_example(x0, mel, spec, 256, noise).t);
  const double span = spec.t_max - spec.t_min;
  const double d = stats::ks_statistic(ts, [&](double t) {
    return std::clamp((t - spec.t_min) / span, 0.0, 1.0);
  });
  CHECK(stats::ks_pvalue(d, ts.size()) > 0.01);
}

TEST_CASE("dsm loss") {
  const SdeSpec spec = SdeSpec::wide();
  const std::vector<double> t1 = {0.5};
  CHECK(dsm_loss_value(Tensor({1, 1}, {1.0}), Tensor({1, 1}, {0.0}), t1, spec, LossNorm::kL2,
                       LossWeighting::kNone) == 0.5);
  CHECK(dsm_loss_value(Tensor({1, 3}, {1, 2, 3}), Tensor({1, 3}, {1, 2, 3}), t1, spec,
                       LossNorm::kL2, LossWeighting::kVariance) == 0.0);
  const double t04 = time_for_variance(spec, 0.04);
  const std::vector<double> tv = {t04};
  CHECK(dsm_loss_value(Tensor({1, 1}, {3.0}), Tensor({1, 1}, {0.0}), tv, spec, LossNorm::kL2,
                       LossWeighting::kVariance) == doctest::Approx(0.18).epsilon(1e-12));
  CHECK(dsm_loss_value(Tensor({1, 1}, {3.0}), Tensor({1, 1}, {0.0}), tv, spec, LossNorm::kL1,
                       LossWeighting::kVariance) == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(dsm_loss_value(Tensor({1, 2}, {3.0, -1.0}), Tensor({1, 2}, {0.0, 0.0}), tv, spec,
                       LossNorm::kL1, LossWeighting::kNone) == doctest::Approx(2.0));
  CHECK(loss_weight(spec, t04, LossNorm::kL2, LossWeighting::kVariance) ==
        doctest::Approx(0.04).epsilon(1e-12));

  CHECK_THROWS_AS(dsm_loss_value(Tensor({1, 2}), Tensor({1, 3}), t1, spec, LossNorm::kL2,
                                 LossWeighting::kNone),
                  ShapeError);
  CHECK_THROWS_AS(dsm_loss_value(Tensor({1, 1}, {NAN}), Tensor({1, 1}), t1, spec, LossNorm::kL2,
                                 LossWeighting::kNone),
                  NumericalError);

  // Gradient of the L2 loss is w (pred - target) / n.
  nn::Parameter p("p", Tensor({2, 2}, {1.0, 2.0, -1.0, 0.5}));
  const Tensor target({2, 2}, {0.0, 1.0, 1.0, 0.0});
  const std::vector<double> t2 = {0.3, 0.8};
  Tape tape;
  tape.backward(dsm_loss(tape.parameter(p), target, t2, spec, LossNorm::kL2,
                         LossWeighting::kVariance));
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t i = 0; i < 2; ++i)
      CHECK(p.grad.at(b, i) == doctest::Approx(transition_variance(spec, t2[b]) *
                                               (p.value.at(b, i) - target.at(b, i)) / 4.0));
}

TEST_CASE("variance-weighted loss of a zero predictor is one half per element") {
  const SdeSpec spec = SdeSpec::wide();
  RandomNoise noise(21);
  const std::size_t batch = 64, d = 256;
  std::vector<double> x0(d);
  for (double& v : x0) v = noise.normal();
  const audio::MelSpectrogram mel = fake_mel(1);
  Tensor target({batch, d});
  std::vector<double> ts(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const TrainExample e = make_example(x0, mel, spec, 256, noise);
    ts[b] = e.t;
    std::copy(e.target.begin(), e.target.end(), target.ptr() + b * d);
  }
  const double loss = dsm_loss_value(Tensor({batch, d}), target, ts, spec, LossNorm::kL2,
                                     LossWeighting::kVariance);
  const double sd = std::sqrt(0.5 / (batch * d));
  CHECK(std::abs(loss - 0.5) < 3.0 * sd);
}

TEST_CASE("train: step-one loss, determinism, checkpoints") {
  const Dataset data = {the_clip()};
  const SdeSpec spec = SdeSpec::wide();
  TrainingConfig c = small_run(6);
  c.checkpoint_every = 3;
  const fs::path d1 = fresh_dir("run1"), d2 = fresh_dir("run2");

  ScoreNet a(ScoreNetConfig::desk(), spec, 3);
  std::ostringstream m1;
  TrainOptions o1;
  o1.checkpoint_dir = d1;
  o1.metrics = &m1;
  const TrainResult r1 = train(data, a, spec, c, o1);
  REQUIRE(r1.losses.size() == 6);
  CHECK(r1.final_step == 6);
  // Zero-initialized head: the first loss is 1/2 mean xi^2 over 2 x 512 draws.
  CHECK(std::abs(r1.losses[0] - 0.5) < 3.0 * std::sqrt(0.5 / 1024));
  CHECK(fs::exists(d1 / "step_3.ckpt"));
  CHECK(fs::exists(d1 / "step_6.ckpt"));
  CHECK(latest_checkpoint(d1) == d1 / "step_6.ckpt");
  CHECK(latest_checkpoint(fresh_dir("none")).empty());

  TrainingConfig c2 = small_run(6);
  c2.checkpoint_every = 3;
  ScoreNet b(ScoreNetConfig::desk(), spec, 3);
  TrainOptions o2;
  o2.checkpoint_dir = d2;
  const TrainResult r2 = train(data, b, spec, c2, o2);
  CHECK(r2.losses == r1.losses);
  CHECK(slurp(d1 / "step_6.ckpt") == slurp(d2 / "step_6.ckpt"));

  // Metrics: step, loss, learning_rate, wall_ms.
  std::istringstream lines(m1.str());
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    ++n;
    CHECK(std::count(line.begin(), line.end(), '\t') == 3);
    CHECK(line.rfind(std::to_string(n) + "\t", 0) == 0);
  }
  CHECK(n == 6);

  // Resume from step 3 reproduces the uninterrupted run.
  ScoreNet r(ScoreNetConfig::desk(), spec, 99);
  TrainingConfig c3 = small_run(6);
  c3.checkpoint_every = 3;
  const int step = restore_training_state(r, c3.adam, nn::load_checkpoint(d1 / "step_3.ckpt"));
  CHECK(step == 3);
  CHECK(c3.adam.step_count == 3);
  TrainOptions o3;
  o3.start_step = step;
  o3.checkpoint_dir = fresh_dir("resumed");
  const TrainResult r3 = train(data, r, spec, c3, o3);
  REQUIRE(r3.losses.size() == 3);
  for (int i = 0; i < 3; ++i) CHECK(r3.losses[i] == r1.losses[3 + i]);
  CHECK(slurp(o3.checkpoint_dir / "step_6.ckpt") == slurp(d1 / "step_6.ckpt"));
}

TEST_CASE("train: data errors") {
  const SdeSpec spec = SdeSpec::wide();
  ScoreNet net(ScoreNetConfig::desk(), spec, 1);
  TrainingConfig c = small_run(1);
  CHECK_THROWS_AS(train(Dataset{}, net, spec, c), ConfigError);
  Clip shortc;
  shortc.samples.assign(256, 0.0);
  shortc.mel = fake_mel(1);
  CHECK_THROWS_AS(train(Dataset{shortc}, net, spec, c), DataError);
  Clip bad = shortc;
  bad.samples.resize(700);
  CHECK_THROWS_AS(train(Dataset{bad}, net, spec, c), DataError);
}

TEST_CASE("train: divergence aborts") {
  const SdeSpec spec = SdeSpec::wide();
  ScoreNet net(ScoreNetConfig::desk(), spec, 1);
  // A huge head makes the first prediction blow the loss past the limit.
  net.parameter("output.1.weight").value.fill(1e6);
  TrainingConfig c = small_run(1);
  c.loss_weighting = LossWeighting::kNone;
  CHECK_THROWS_AS(train(Dataset{the_clip()}, net, spec, c), NumericalError);
}

TEST_CASE("single-clip overfit") {
  const SdeSpec spec = SdeSpec::wide();
  ScoreNet net(ScoreNetConfig::desk(), spec, 4);
  TrainingConfig c;
  c.batch_size = 1;
  c.segment_length = 1024;
  c.max_steps = 2000;
  c.adam.learning_rate = 1e-3;
  c.seed = 4;
  // One example: a single segment-length excerpt, so every step sees the same x0.
  audio::Waveform w = audio::read_wav(ITOWAVE_CLIP, 22050);
  REQUIRE(w.samples.size() >= 2048 + 1024);
  w.samples = std::vector<double>(w.samples.begin() + 2048, w.samples.begin() + 2048 + 1024);
  const TrainResult r = train(Dataset{make_clip(w, audio::FeatureConfig{})}, net, spec, c);
  // Per-step losses are dominated by the random t; compare window means.
  const double first = std::accumulate(r.losses.begin(), r.losses.begin() + 20, 0.0) / 20;
  const double last = std::accumulate(r.losses.end() - 200, r.losses.end(), 0.0) / 200;
  MESSAGE("overfit: first-20 mean " << first << ", last-200 mean " << last);
  CHECK(last < 0.1 * first);
}

TEST_CASE("explicit score matching") {
  RandomNoise noise(1);
  const GaussianDensity g(0.0, 1.0);
  CHECK(esm_error([&](double x) { return g.score(x); }, g, 1000, noise) == 0.0);
  const double zero = esm_error([](double) { return 0.0; }, g, 200000, noise);
  CHECK(zero == doctest::Approx(1.0).epsilon(0.02));

  const GaussianMixture mix({{0.3, -1.0, 0.2}, {0.7, 2.0, 0.5}});
  // Mixture score vs finite differences of its log-density.
  for (double x : {-2.0, -0.5, 0.3, 1.7, 4.0}) {
    const double h = 1e-5;
    const double fd = (mix.log_density(x + h) - mix.log_density(x - h)) / (2 * h);
    CHECK(mix.score(x) == doctest::Approx(fd).epsilon(1e-6));
  }
  const GaussianMixture wide = mix.perturbed(0.5);
  CHECK(wide.components()[1].variance == doctest::Approx(0.75));
  CHECK_THROWS_AS(GaussianDensity(0.0, 0.0), ConfigError);
}

TEST_CASE("toy DSM approaches the perturbed score") {
  const GaussianMixture data({{0.5, -1.0, 0.05}, {0.5, 1.0, 0.05}});
  ToyDsmConfig c;
  std::vector<double> trace;
  DenseScoreModel model = train_toy_dsm(data, c, &trace);
  RandomNoise noise(2);
  const GaussianMixture target = data.perturbed(c.sigma);
  const double trained = esm_error([&](double x) { return model(x); }, target, 20000, noise);
  DenseScoreModel untrained(c.hidden, c.seed);
  const double before = esm_error([&](double x) { return untrained(x); }, target, 20000, noise);
  CHECK(trained < 0.05);
  CHECK(trained < before);

  // Gaussian data: the DSM optimum is the analytic marginal score.
  const GaussianDensity gauss(0.5, 0.25);
  ToyDsmConfig gc;
  gc.steps = 1500;
  DenseScoreModel gm = train_toy_dsm(gauss, gc);
  const GaussianDensity marginal(0.5, 0.25 + gc.sigma * gc.sigma);
  CHECK(esm_error([&](double x) { return gm(x); }, marginal, 20000, noise) < 0.05);
}

}  // TEST_SUITE
