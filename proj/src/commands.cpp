#include "itowave/commands.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>
#include <sstream>

#include "itowave/errors.hpp"
#include "itowave/nn/checkpoint.hpp"
#include "itowave/sampler.hpp"

namespace itowave {

using nn::Tensor;

namespace {

constexpr const char* kFingerprintTensor = "__feature_fingerprint";

nn::NamedTensor fingerprint_tensor(const audio::FeatureConfig& f) {
  const std::uint64_t fp = f.fingerprint();
  return {kFingerprintTensor,
          Tensor({2}, {static_cast<double>(fp >> 32), static_cast<double>(fp & 0xffffffffu)})};
}

std::vector<fs::path> list_wavs(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError("input directory " + dir.string() + " not found");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (e.is_regular_file() && ext == ".wav") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_stats(const fs::path& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out.precision(10);
  out << "step\trms\tmin\tmax\thf_rms\n";
  for (const Snapshot& s : traj.snapshots) {
    const SignalStats st = signal_stats(s.state.data());
    out << s.step << '\t' << st.rms << '\t' << st.min << '\t' << st.max << '\t' << st.hf_rms
        << '\n';
  }
}

struct GeneratedSignal {
  std::vector<double> samples;
  Trajectory trajectory;
};

GeneratedSignal run_generation(const RunConfig& config, ScoreNet& net,
                               const audio::MelSpectrogram& mel, const SamplerConfig& sc,
                               std::uint64_t stream) {
  const std::size_t len = mel.n_frames * static_cast<std::size_t>(config.feature.hop_length);
  auto model = net.bind(mel_tensor(mel));
  NoiseBank noise;
  noise.push_back(std::make_unique<RandomNoise>(sc.seed, stream));
  const std::vector<double> init = sample_prior(config.sde, len, *noise[0]);
  Generation g = generate_from(Tensor({1, len}, init), config.sde, *model, sc, noise);
  return {g.samples.vec(), std::move(g.trajectory)};
}

fs::path resolve_checkpoint(const RunConfig& config, const fs::path& checkpoint) {
  if (!checkpoint.empty()) return checkpoint;
  fs::path latest = latest_checkpoint(config.paths.checkpoint_dir);
  if (latest.empty()) {
    throw DataError("no checkpoint found in " + config.paths.checkpoint_dir.string());
  }
  return latest;
}

}  // namespace

void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << "split\tname\twav\tmel\tsamples\tframes\n";
  for (const ManifestEntry& e : entries) {
    out << e.split << '\t' << e.name << '\t' << e.wav.string() << '\t' << e.mel.string() << '\t'
        << e.samples << '\t' << e.frames << '\n';
  }
}

std::vector<ManifestEntry> read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest " + path.string() + " not found (run `features` first)");
  std::vector<ManifestEntry> out;
  std::string line;
  std::getline(in, line);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    ManifestEntry e;
    std::string wav, mel, samples, frames;
    if (!std::getline(ss, e.split, '\t') || !std::getline(ss, e.name, '\t') ||
        !std::getline(ss, wav, '\t') || !std::getline(ss, mel, '\t') ||
        !std::getline(ss, samples, '\t') || !std::getline(ss, frames)) {
      throw DataError("manifest line " + std::to_string(line_no) + " is malformed");
    }
    e.wav = wav;
    e.mel = mel;
    e.samples = std::stoul(samples);
    e.frames = std::stoul(frames);
    out.push_back(std::move(e));
  }
  return out;
}

FeaturesSummary cmd_features(const RunConfig& config, const fs::path& input_dir,
                             std::ostream& log) {
  config.feature.validate();
  const std::vector<fs::path> wavs = list_wavs(input_dir);
  if (wavs.empty()) throw DataError("no input files in " + input_dir.string());
  fs::create_directories(config.paths.cache_dir);

  FeaturesSummary summary;
  std::vector<ManifestEntry> entries;
  for (const fs::path& wav : wavs) {
    try {
      const audio::Waveform w = audio::read_wav(wav, config.feature.sample_rate);
      const audio::MelSpectrogram mel = audio::mel_spectrogram(w, config.feature);
      const fs::path mel_path = config.paths.cache_dir / (wav.stem().string() + ".mel");
      audio::save_mel(mel_path, mel);
      entries.push_back({"train", wav.stem().string(), wav, mel_path, w.samples.size(),
                         mel.n_frames});
      ++summary.processed;
    } catch (const std::exception& e) {
      log << "skipping " << wav.string() << ": " << e.what() << '\n';
      ++summary.failed;
    }
  }
  if (entries.empty()) throw DataError("all " + std::to_string(wavs.size()) + " input files failed");

  // Seeded Fisher-Yates over the name-sorted list.
  std::vector<std::size_t> order(entries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  RandomNoise rng(config.split.seed, 0x5b1);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = rng.next_u64() % i;
    std::swap(order[i - 1], order[j]);
  }
  const double n = static_cast<double>(entries.size());
  const auto n_valid = static_cast<std::size_t>(std::llround(n * config.split.valid_fraction));
  const auto n_test = static_cast<std::size_t>(std::llround(n * config.split.test_fraction));
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (r < n_valid) entries[order[r]].split = "valid";
    else if (r < n_valid + n_test) entries[order[r]].split = "test";
  }
  summary.manifest = config.paths.cache_dir / "manifest.tsv";
  write_manifest(summary.manifest, entries);
  log << "features: " << summary.processed << " cached, " << summary.failed << " skipped\n";
  return summary;
}

TrainResult cmd_train(const RunConfig& config, std::ostream& log) {
  config.validate();
  const std::vector<ManifestEntry> manifest = read_manifest(config.paths.cache_dir / "manifest.tsv");
  Dataset data;
  const std::size_t hop = config.feature.hop_length;
  for (const ManifestEntry& e : manifest) {
    if (e.split != "train") continue;
    audio::MelSpectrogram mel = audio::load_mel(e.mel);
    audio::check_fingerprint(mel, config.feature);
    audio::Waveform w = audio::read_wav(e.wav, config.feature.sample_rate);
    Clip clip;
    clip.mel = mel.aligned();
    const std::size_t len = clip.mel.n_frames * hop;
    if (w.samples.size() < len) {
      throw DataError(e.wav.string() + " has " + std::to_string(w.samples.size()) +
                      " samples but its cached mel needs " + std::to_string(len));
    }
    clip.samples.assign(w.samples.begin(), w.samples.begin() + static_cast<long>(len));
    data.push_back(std::move(clip));
  }
  if (data.empty()) throw DataError("manifest has no train entries");

  ScoreNet net(config.model, config.sde, config.train.seed);
  TrainingConfig tc = config.train;
  TrainOptions options;
  options.checkpoint_dir = config.paths.checkpoint_dir;
  options.extra_tensors.push_back(fingerprint_tensor(config.feature));
  fs::create_directories(config.paths.checkpoint_dir);
  const fs::path latest = latest_checkpoint(config.paths.checkpoint_dir);
  if (!latest.empty()) {
    const std::vector<nn::NamedTensor> state = nn::load_checkpoint(latest);
    options.start_step = restore_training_state(net, tc.adam, state);
    log << "resuming from " << latest.string() << " (step " << options.start_step << ")\n";
  }
  save_config(config.paths.checkpoint_dir / "config.txt", config);
  const fs::path metrics_path = config.paths.checkpoint_dir / "metrics.tsv";
  const bool fresh = !fs::exists(metrics_path) || options.start_step == 0;
  std::ofstream metrics(metrics_path, fresh ? std::ios::trunc : std::ios::app);
  if (!metrics) throw DataError("cannot write " + metrics_path.string());
  if (fresh) metrics << "step\tloss\tlearning_rate\twall_ms\n";
  options.metrics = &metrics;
  TrainResult result = train(data, net, config.sde, tc, options);
  log << "trained to step " << result.final_step << '\n';
  return result;
}

ScoreNet load_model(const RunConfig& config, const fs::path& checkpoint) {
  config.validate();
  const std::vector<nn::NamedTensor> state = nn::load_checkpoint(checkpoint);
  for (const nn::NamedTensor& t : state) {
    if (t.name == kFingerprintTensor && !(t.value == fingerprint_tensor(config.feature).value)) {
      throw ConfigError("checkpoint " + checkpoint.string() +
                        " was trained with different feature settings");
    }
  }
  ScoreNet net(config.model, config.sde, config.train.seed);
  net.load_state(state);
  return net;
}

audio::MelSpectrogram load_condition(const RunConfig& config, const fs::path& source) {
  std::string ext = source.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  if (ext == ".wav") {
    const audio::Waveform w = audio::read_wav(source, config.feature.sample_rate);
    return audio::mel_spectrogram(w, config.feature).aligned();
  }
  audio::MelSpectrogram mel = audio::load_mel(source);
  audio::check_fingerprint(mel, config.feature);
  return mel.aligned();
}

Tensor mel_tensor(const audio::MelSpectrogram& mel) {
  Tensor t({1, mel.n_mels, mel.n_frames});
  for (std::size_t f = 0; f < mel.n_frames; ++f)
    for (std::size_t m = 0; m < mel.n_mels; ++m) t.at(0, m, f) = mel.at(f, m);
  return t;
}

std::vector<fs::path> cmd_sample(const RunConfig& config, const fs::path& checkpoint,
                                 const std::vector<fs::path>& sources, const fs::path& out_dir,
                                 std::ostream& log) {
  if (sources.empty()) throw DataError("sample: no mel sources given");
  ScoreNet net = load_model(config, resolve_checkpoint(config, checkpoint));
  fs::create_directories(out_dir);
  std::vector<fs::path> written;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const audio::MelSpectrogram mel = load_condition(config, sources[i]);
    const GeneratedSignal g = run_generation(config, net, mel, config.sample, i);
    const std::string stem = sources[i].stem().string();
    const fs::path out = out_dir / (stem + ".wav");
    audio::write_wav(out, {g.samples, config.feature.sample_rate});
    if (!config.sample.snapshot_steps.empty()) {
      const fs::path dir = out_dir / stem;
      fs::create_directories(dir);
      for (const Snapshot& s : g.trajectory.snapshots) {
        audio::write_wav(dir / ("step_" + std::to_string(s.step) + ".wav"),
                         {s.state.vec(), config.feature.sample_rate});
      }
      write_stats(dir / "trajectory_stats.tsv", g.trajectory);
    }
    log << "wrote " << out.string() << '\n';
    written.push_back(out);
  }
  return written;
}

std::vector<int> default_snapshots(int n_steps) {
  std::vector<int> out = {1};
  for (int i = 2; i <= 10; ++i) out.push_back(n_steps * i / 10);
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

fs::path cmd_diagnose(const RunConfig& config, const fs::path& checkpoint, const fs::path& source,
                      const fs::path& out_dir, std::ostream& log) {
  ScoreNet net = load_model(config, resolve_checkpoint(config, checkpoint));
  SamplerConfig sc = config.sample;
  if (sc.snapshot_steps.empty()) sc.snapshot_steps = default_snapshots(sc.n_steps);
  const audio::MelSpectrogram mel = load_condition(config, source);
  const GeneratedSignal g = run_generation(config, net, mel, sc, 0);
  fs::create_directories(out_dir);
  for (const Snapshot& s : g.trajectory.snapshots) {
    audio::write_wav(out_dir / ("step_" + std::to_string(s.step) + ".wav"),
                     {s.state.vec(), config.feature.sample_rate});
  }
  const fs::path stats = out_dir / "trajectory_stats.tsv";
  write_stats(stats, g.trajectory);
  log << "wrote " << g.trajectory.snapshots.size() << " snapshots to " << out_dir.string() << '\n';
  return stats;
}

bool cmd_validate(const RunConfig& config, std::ostream& report, const ValidateOptions& base) {
  ValidateOptions options = base;
  options.seed = config.sample.seed;
  const ValidationReport r = run_validation(options);
  r.print(report);
  return r.all_passed();
}

}  // namespace itowave
