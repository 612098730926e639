#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "itowave/commands.hpp"
#include "itowave/config.hpp"
#include "itowave/errors.hpp"

using namespace itowave;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "itowave_test_cli" / name;
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

void write_tone(const fs::path& p, double hz, std::size_t n) {
  audio::Waveform w;
  for (std::size_t i = 0; i < n; ++i)
    w.samples.push_back(0.3 * std::sin(2.0 * std::numbers::pi * hz * i / 22050.0));
  audio::write_wav(p, w);
}

// Small enough that train + sample take a second or two.
RunConfig tiny(const fs::path& root) {
  RunConfig c = RunConfig::preset("desk");
  c = parse_config(R"(
    model.residual_layers = 2
    model.residual_channels = 4
    model.skip_channels = 4
    model.time_embed_dim = 8
    train.segment_length = 512
    train.max_steps = 4
    train.checkpoint_every = 2
    sample.n_steps = 5
    split.valid_fraction = 0
    split.test_fraction = 0
  )", c);
  c.paths.cache_dir = root / "cache";
  c.paths.checkpoint_dir = root / "ckpt";
  c.paths.output_dir = root / "out";
  return c;
}

// metrics.tsv without the wall-clock column.
std::string metrics_without_time(const fs::path& p) {
  std::istringstream in(slurp(p));
  std::string line, out;
  while (std::getline(in, line)) out += line.substr(0, line.rfind('\t')) + "\n";
  return out;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("config round trip and errors") {
  for (const char* name : {"paper", "wide", "desk"}) {
    CAPTURE(name);
    RunConfig c = RunConfig::preset(name);
    c.sample.snapshot_steps = {1, 200, 1000};
    c.train.adam.learning_rate = 0.1 + 0.2;  // not exactly representable in short decimal
    c.paths.cache_dir = "some dir/cache";
    const std::string text = serialize_config(c);
    const RunConfig back = parse_config(text);
    CHECK(back == c);
    CHECK(serialize_config(back) == text);
  }
  CHECK(RunConfig::preset("paper").sde == SdeSpec::paper());
  CHECK(RunConfig::preset("desk").model == ScoreNetConfig::desk());
  CHECK_THROWS_AS(RunConfig::preset("huge"), ConfigError);

  CHECK_THROWS_AS(parse_config("model.no_such_key = 3"), ConfigError);
  CHECK_THROWS_AS(parse_config("train.batch_size = many"), ConfigError);
  CHECK_THROWS_AS(parse_config("train.loss_norm = l3"), ConfigError);
  CHECK_THROWS_AS(parse_config("just some words"), ConfigError);
  try {
    parse_config("# ok\n\ntrain.batch_size = 2\nsde.sigma0 = x\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
  const RunConfig c = parse_config("train.loss_norm = l1  # comment\nsample.snapshot_steps = 1, 5");
  CHECK(c.train.loss_norm == LossNorm::kL1);
  CHECK(c.sample.snapshot_steps == std::vector<int>{1, 5});
}

TEST_CASE("cross-module validation") {
  RunConfig c = RunConfig::preset("desk");
  CHECK_NOTHROW(c.validate());
  RunConfig bad = parse_config("model.upsample_stride2 = 8", c);
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("hop"), ConfigError);
  bad = parse_config("model.mel_bins = 64", c);
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("n_mels"), ConfigError);
  bad = parse_config("train.segment_length = 1000", c);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  std::ostringstream log;
  CHECK_THROWS_AS(cmd_train(bad, log), ConfigError);
}

TEST_CASE("features") {
  const fs::path root = fresh_dir("features");
  RunConfig c = tiny(root);
  std::ostringstream log;
  fs::create_directories(root / "empty");
  CHECK_THROWS_WITH_AS(cmd_features(c, root / "empty", log), doctest::Contains("no input files"),
                       DataError);

  const fs::path in = root / "wavs";
  fs::create_directories(in);
  for (int i = 0; i < 10; ++i) write_tone(in / ("f" + std::to_string(i) + ".wav"), 200 + 50 * i, 22050);
  std::ofstream(in / "broken.wav") << "nope";
  c.split.valid_fraction = 0.2;
  c.split.test_fraction = 0.1;
  const FeaturesSummary s = cmd_features(c, in, log);
  CHECK(s.processed == 10);
  CHECK(s.failed == 1);
  CHECK(log.str().find("broken.wav") != std::string::npos);
  const std::string first = slurp(s.manifest);
  const auto entries = read_manifest(s.manifest);
  REQUIRE(entries.size() == 10);
  int valid = 0, test = 0;
  for (const auto& e : entries) {
    CHECK(e.frames == 87);
    CHECK(audio::load_mel(e.mel).n_frames == 87);
    valid += e.split == "valid";
    test += e.split == "test";
  }
  CHECK(valid == 2);
  CHECK(test == 1);
  cmd_features(c, in, log);
  CHECK(slurp(s.manifest) == first);
  c.split.seed = 5;
  cmd_features(c, in, log);
  CHECK(slurp(s.manifest) != first);

  // All inputs unreadable.
  const fs::path junk = root / "junk";
  fs::create_directories(junk);
  std::ofstream(junk / "a.wav") << "x";
  CHECK_THROWS_AS(cmd_features(c, junk, log), DataError);
}

TEST_CASE("validate command") {
  RunConfig c;
  std::ostringstream report;
  CHECK(cmd_validate(c, report));
  const std::string text = report.str();
  for (const char* row : {"score_finite_difference_rel_err", "forward_variance_t0.25",
                          "forward_variance_t0.5", "forward_variance_t1", "langevin_ks_pvalue",
                          "gaussian_recovery_variance", "dsm_esm_error"})
    CHECK(text.find(row) != std::string::npos);
  CHECK(text.find("FAIL") == std::string::npos);
}

TEST_CASE("validate catches a sign error in the transition score") {
  ValidateOptions broken;
  broken.transition_score = [](const SdeSpec& s, std::span<const double> x_t,
                               std::span<const double> x0, double t) {
    std::vector<double> v = score_of_transition(s, x_t, x0, t);
    for (double& e : v) e = -e;
    return v;
  };
  ValidationReport r;
  check_score_formula(r, broken);
  REQUIRE(r.checks.size() == 1);
  CHECK_FALSE(r.checks[0].passed);
  ValidationReport ok;
  check_score_formula(ok, ValidateOptions{});
  CHECK(ok.checks[0].passed);
}

TEST_CASE("train and sample are deterministic") {
  const fs::path root = fresh_dir("pipeline");
  const fs::path in = root / "wavs";
  fs::create_directories(in);
  fs::copy_file(ITOWAVE_CLIP, in / "clip.wav");
  std::ostringstream log;

  auto run = [&](const std::string& tag) {
    RunConfig c = tiny(root / tag);
    cmd_features(c, in, log);
    cmd_train(c, log);
    c.sample.snapshot_steps = {0, 3, 5};
    const auto outs = cmd_sample(c, {}, {in / "clip.wav", c.paths.cache_dir / "clip.mel"},
                                 c.paths.output_dir, log);
    REQUIRE(outs.size() == 2);
    return c;
  };
  const RunConfig a = run("a");
  const RunConfig b = run("b");
  for (const char* ck : {"step_2.ckpt", "step_4.ckpt"})
    CHECK(slurp(a.paths.checkpoint_dir / ck) == slurp(b.paths.checkpoint_dir / ck));
  CHECK(metrics_without_time(a.paths.checkpoint_dir / "metrics.tsv") ==
        metrics_without_time(b.paths.checkpoint_dir / "metrics.tsv"));
  const std::string wav = slurp(a.paths.output_dir / "clip.wav");
  CHECK(wav.size() > 44);
  CHECK(wav == slurp(b.paths.output_dir / "clip.wav"));
  CHECK(slurp(a.paths.output_dir / "clip" / "trajectory_stats.tsv") ==
        slurp(b.paths.output_dir / "clip" / "trajectory_stats.tsv"));
  CHECK(fs::exists(a.paths.output_dir / "clip" / "step_3.wav"));
  // Same mel from the .wav and from the cache.
  CHECK(load_condition(a, in / "clip.wav").values ==
        load_condition(a, a.paths.cache_dir / "clip.mel").values);

  // Resume: a second train call with a higher max_steps continues from step 4.
  RunConfig more = a;
  more.train.max_steps = 6;
  const TrainResult r = cmd_train(more, log);
  CHECK(r.losses.size() == 2);
  CHECK(r.final_step == 6);

  // Diagnose: one stats row and one WAV per snapshot.
  const fs::path stats_path = cmd_diagnose(a, {}, in / "clip.wav", root / "diag", log);
  CHECK(stats_path == root / "diag" / "trajectory_stats.tsv");
  const std::string stats = slurp(stats_path);
  CHECK(stats.rfind("step\trms\tmin\tmax\thf_rms\n", 0) == 0);
  CHECK(std::count(stats.begin(), stats.end(), '\n') == 4);
  CHECK(fs::exists(root / "diag" / "step_5.wav"));
  CHECK(default_snapshots(1000) ==
        std::vector<int>{1, 200, 300, 400, 500, 600, 700, 800, 900, 1000});

  // A checkpoint trained under other features is refused.
  RunConfig other = a;
  other.feature.fmax = 7000.0;
  CHECK_THROWS_AS(load_model(other, a.paths.checkpoint_dir / "step_4.ckpt"), ConfigError);
  CHECK_THROWS_AS(load_condition(other, a.paths.cache_dir / "clip.mel"), ConfigError);
}

}  // TEST_SUITE
