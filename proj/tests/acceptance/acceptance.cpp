// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
// Usage: acceptance [criterion ...]   (default: all of 1-9)
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "../unit/gradcheck.hpp"
#include "itowave/commands.hpp"
#include "itowave/nn/ops.hpp"
#include "itowave/validate.hpp"

using namespace itowave;
namespace fs = std::filesystem;
using nn::Tape;
using nn::Var;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(int id, const std::string& title, bool ok, const std::string& detail) {
  if (!ok) ++failures;
  std::cout << (ok ? "[PASS] " : "[FAIL] ") << id << ". " << title << ": " << detail << std::endl;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

// Runs one validation check and reports it with its runtime budget.
void battery_row(int id, const std::string& title, double budget_s,
                 void (*check)(ValidationReport&, const ValidateOptions&)) {
  const auto t0 = Clock::now();
  ValidationReport r;
  check(r, ValidateOptions{});
  const double secs = seconds_since(t0);
  bool ok = secs < budget_s;
  std::ostringstream d;
  d.precision(4);
  for (const CheckResult& c : r.checks) {
    ok = ok && c.passed;
    d << c.name << "=" << c.measured << " (expected " << c.expected << ", tol " << c.tolerance
      << ") ";
  }
  d << fmt("[%.1f s, budget %.0f s]", secs, budget_s);
  report(id, title, ok, d.str());
}

void moment_ode(ValidationReport& r, const ValidateOptions&) { check_moment_ode(r); }

nn::Parameter randp(const std::string& name, nn::Shape shape, std::uint64_t seed) {
  return testing::random_param(name, std::move(shape), seed);
}

void criterion7() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  auto run = [&](std::vector<nn::Parameter*> ps, const std::function<Var(Tape&)>& f) {
    const testing::GradCheck g = testing::grad_check(ps, f, 20);
    worst = std::max(worst, g.worst_rel);
    checked += g.checked;
  };
  nn::Parameter x = randp("x", {2, 3, 16}, 1), y = randp("y", {2, 3, 16}, 2);
  nn::Parameter cw = randp("cw", {4, 3, 3}, 3), cb = randp("cb", {4}, 4);
  nn::Parameter tw = randp("tw", {3, 2, 8}, 5), tb = randp("tb", {2}, 6);
  nn::Parameter lx = randp("lx", {5, 7}, 7), lw = randp("lw", {3, 7}, 8), lb = randp("lb", {3}, 9);
  nn::Parameter v = randp("v", {2, 3}, 10);
  auto P = [](Tape& t, nn::Parameter& p) { return t.parameter(p); };
  // Layers.
  run({&x, &cw, &cb}, [&](Tape& t) { return nn::sum(nn::tanh(nn::conv1d(P(t, x), P(t, cw), P(t, cb), 2, 2))); });
  run({&x, &tw, &tb}, [&](Tape& t) {
    return nn::sum(nn::tanh(nn::conv_transpose1d(P(t, x), P(t, tw), P(t, tb), 4, 2)));
  });
  run({&lx, &lw, &lb}, [&](Tape& t) { return nn::sum(nn::tanh(nn::linear(P(t, lx), P(t, lw), P(t, lb)))); });
  // Elementwise, broadcast, reshaping and reductions.
  run({&x, &y, &v}, [&](Tape& t) {
    Var a = P(t, x), b = P(t, y);
    Var h = nn::add(nn::mul(nn::sigmoid(a), nn::silu(b)), nn::leaky_relu(nn::sub(a, b)));
    h = nn::add(h, nn::relu(nn::scale(b, 0.5)));
    h = nn::add(h, nn::abs(nn::add_channel_vector(a, P(t, v))));
    h = nn::crop_length(nn::slice_channels(h, 1, 2), 2, 10);
    Var m = nn::transpose(nn::reshape(h, {4, 10}));
    const std::vector<double> w = {0.5, -1.5};
    return nn::add(nn::mean(nn::square(m)), nn::sum(nn::scale_batch(a, w)));
  });

  // Two-block desk-width score network; zero head replaced so every layer is exercised.
  ScoreNetConfig c = ScoreNetConfig::desk();
  c.residual_layers = 2;
  ScoreNet net(c, SdeSpec::wide(), 3);
  RandomNoise rng(4);
  for (nn::Parameter* p : net.parameters()) {
    if (p->name.find("bias") != std::string::npos || p->name.rfind("output.1", 0) == 0)
      for (double& e : p->value.data()) e = 0.1 * rng.normal();
  }
  nn::Tensor xt({2, 512});
  nn::Tensor mel({2, 80, 2});
  rng.fill_normal(xt.data());
  for (double& e : mel.data()) e = -5.0 + 2.0 * rng.normal();
  const std::vector<double> ts = {0.2, 0.7};
  const testing::GradCheck g = testing::grad_check(net.parameters(), [&](Tape& t) {
    return nn::mean(nn::square(net.forward(t, t.constant(xt), ts, t.constant(mel))));
  }, 4, 1e-5);
  const double secs = seconds_since(t0);
  const bool ok = worst < 1e-3 && g.worst_rel < 1e-3 && secs < 120.0;
  report(7, "gradient checks", ok,
         fmt("nn layers worst rel err %.2e over %zu coords; 2-block score net %.2e over %zu "
             "coords (tol 1e-3) [%.1f s, budget 120 s]",
             worst, checked, g.worst_rel, g.checked, secs));
}

double mel_l1(const std::vector<double>& x, const audio::MelSpectrogram& ref,
              const audio::FeatureConfig& fc) {
  const audio::MelSpectrogram m = audio::mel_spectrogram({x, fc.sample_rate}, fc).aligned();
  double s = 0.0;
  for (std::size_t i = 0; i < m.values.size(); ++i) s += std::abs(m.values[i] - ref.values[i]);
  return s / static_cast<double>(m.values.size());
}

void criterion8() {
  const auto t0 = Clock::now();
  RunConfig config = RunConfig::preset("desk");
  const audio::Waveform wave = audio::read_wav(ITOWAVE_CLIP, config.feature.sample_rate);
  const Clip clip = make_clip(wave, config.feature);
  const std::size_t len = clip.samples.size();

  ScoreNet net(config.model, config.sde, config.train.seed);
  SamplerConfig sc = config.sample;
  sc.n_steps = 1000;
  sc.snapshot_steps = {200, 400, 600, 800, 1000};
  auto sample = [&]() {
    auto model = net.bind(mel_tensor(clip.mel));
    NoiseBank noise = chain_noise(sc.seed, 1);
    const std::vector<double> init = sample_prior(config.sde, len, *noise[0]);
    return generate_from(nn::Tensor({1, len}, init), config.sde, *model, sc, noise);
  };

  const Generation before = sample();
  const double d0 = mel_l1(before.samples.vec(), clip.mel, config.feature);

  TrainingConfig tc = config.train;
  const TrainResult tr = train(Dataset{clip}, net, config.sde, tc);
  auto window = [&](std::size_t from, std::size_t to) {
    double s = 0.0;
    for (std::size_t i = from; i < to; ++i) s += tr.losses[i];
    return s / static_cast<double>(to - from);
  };
  const std::size_t n = tr.losses.size();

  const Generation after = sample();
  const double d1 = mel_l1(after.samples.vec(), clip.mel, config.feature);
  std::ostringstream hf;
  hf.precision(4);
  bool monotone = true;
  double prev = INFINITY;
  for (int step : sc.snapshot_steps) {
    const Snapshot* s = after.trajectory.find(step);
    const double h = s ? signal_stats(s->state.data()).hf_rms : NAN;
    monotone = monotone && h < prev;
    prev = h;
    hf << step << ":" << h << " ";
  }
  const bool ok = d1 < 0.5 * d0 && monotone;
  report(8, "single-clip overfit", ok,
         fmt("%d steps; loss first-50 mean %.4f, last-200 mean %.4f; mel L1 trained %.4f vs "
             "untrained %.4f (ratio %.3f, need < 0.5); snapshot hf_rms %s(%s) [%.0f s]",
             config.train.max_steps, window(0, 50), window(n - 200, n), d1, d0, d1 / d0,
             hf.str().c_str(), monotone ? "decreasing" : "NOT decreasing", seconds_since(t0)));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string metrics_without_time(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind('\t')) + "\n";
  return out;
}

void criterion9() {
  const auto t0 = Clock::now();
  // validate
  std::ostringstream v1, v2;
  RunConfig base = RunConfig::preset("desk");
  cmd_validate(base, v1);
  cmd_validate(base, v2);
  const bool validate_same = v1.str() == v2.str();

  // train 100 steps, then sample, in two fresh trees
  const fs::path root = fs::temp_directory_path() / "itowave_acceptance_c9";
  fs::remove_all(root);
  const fs::path in = root / "wavs";
  fs::create_directories(in);
  fs::copy_file(ITOWAVE_CLIP, in / "clip.wav");
  std::ostringstream log;
  auto run = [&](const std::string& tag) {
    RunConfig c = base;
    c.train.max_steps = 100;
    c.train.checkpoint_every = 50;
    c.sample.n_steps = 50;
    c.split.valid_fraction = 0.0;
    c.split.test_fraction = 0.0;
    c.paths.cache_dir = root / tag / "cache";
    c.paths.checkpoint_dir = root / tag / "ckpt";
    c.paths.output_dir = root / tag / "out";
    cmd_features(c, in, log);
    cmd_train(c, log);
    cmd_sample(c, {}, {in / "clip.wav"}, c.paths.output_dir, log);
    return c;
  };
  const RunConfig a = run("a"), b = run("b");
  const std::string ck = "step_100.ckpt";
  const bool ckpt_same = fs::exists(a.paths.checkpoint_dir / ck) &&
                         slurp(a.paths.checkpoint_dir / ck) == slurp(b.paths.checkpoint_dir / ck);
  const bool metrics_same = metrics_without_time(a.paths.checkpoint_dir / "metrics.tsv") ==
                            metrics_without_time(b.paths.checkpoint_dir / "metrics.tsv");
  const std::string wa = slurp(a.paths.output_dir / "clip.wav");
  const bool wav_same = wa.size() > 44 && wa == slurp(b.paths.output_dir / "clip.wav");
  fs::remove_all(root);
  report(9, "determinism", validate_same && ckpt_same && metrics_same && wav_same,
         fmt("validate report %s; train 100 steps checkpoint %s, metrics (sans wall_ms) %s; "
             "sample WAV %s [%.0f s]",
             validate_same ? "identical" : "DIFFERS", ckpt_same ? "identical" : "DIFFERS",
             metrics_same ? "identical" : "DIFFER", wav_same ? "identical" : "DIFFERS",
             seconds_since(t0)));
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> want;
  for (int i = 1; i < argc; ++i) want.insert(std::stoi(argv[i]));
  if (want.empty()) want = {1, 2, 3, 4, 5, 6, 7, 8, 9};
  auto on = [&](int id) { return want.count(id) > 0; };
  try {
    if (on(1)) battery_row(1, "score-formula oracle", 10.0, check_score_formula);
    if (on(2)) battery_row(2, "moment-ODE consistency", 1.0, moment_ode);
    if (on(3)) battery_row(3, "forward-simulation variance", 60.0, check_forward_variance);
    if (on(4)) battery_row(4, "Langevin stationarity", 60.0, check_langevin_stationarity);
    if (on(5)) battery_row(5, "Gaussian target recovery", 300.0, check_gaussian_recovery);
    if (on(6)) battery_row(6, "DSM/ESM equivalence", 300.0, check_dsm_esm);
    if (on(7)) criterion7();
    if (on(9)) criterion9();
    if (on(8)) criterion8();
  } catch (const std::exception& e) {
    std::cout << "[FAIL] aborted: " << e.what() << std::endl;
    return 1;
  }
  std::cout << (failures == 0 ? "all selected criteria passed" : "some criteria FAILED")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
