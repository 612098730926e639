#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "itowave/audio.hpp"
#include "itowave/config.hpp"
#include "itowave/score_net.hpp"
#include "itowave/training.hpp"
#include "itowave/validate.hpp"

namespace itowave {

namespace fs = std::filesystem;

struct ManifestEntry {
  std::string split;  // train, valid or test
  std::string name;
  fs::path wav;
  fs::path mel;
  std::size_t samples = 0;
  std::size_t frames = 0;
};

// manifest.tsv: header line, then split, name, wav, mel, samples, frames.
void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const fs::path& path);

struct FeaturesSummary {
  std::size_t processed = 0;
  std::size_t failed = 0;
  fs::path manifest;
};

/// One mel cache per WAV in `input_dir` (sorted by name) plus manifest.tsv in
/// paths.cache_dir with a split seeded by split.seed. Unreadable files are
/// logged and skipped. Throws DataError when there are no inputs or all fail.
FeaturesSummary cmd_features(const RunConfig& config, const fs::path& input_dir,
                             std::ostream& log);

/// Trains on the manifest's train split, resuming from the newest checkpoint in
/// paths.checkpoint_dir. Appends to checkpoint_dir/metrics.tsv.
TrainResult cmd_train(const RunConfig& config, std::ostream& log);

/// Network for `config` with the weights of `checkpoint`; refuses a checkpoint
/// written under a different FeatureConfig.
ScoreNet load_model(const RunConfig& config, const fs::path& checkpoint);

/// Conditioning mel for generation: a .wav is analysed, anything else is read
/// as a mel cache (fingerprint-checked). Returned in the training alignment.
audio::MelSpectrogram load_condition(const RunConfig& config, const fs::path& source);

/// [1, n_mels, frames]
nn::Tensor mel_tensor(const audio::MelSpectrogram& mel);

/// Generates one waveform per source into out_dir/<stem>.wav. Source i uses
/// noise stream (sample.seed, i). With sample.snapshot_steps set, also writes
/// out_dir/<stem>/step_{k}.wav and trajectory_stats.tsv. An empty checkpoint
/// path means the newest one in paths.checkpoint_dir.
std::vector<fs::path> cmd_sample(const RunConfig& config, const fs::path& checkpoint,
                                 const std::vector<fs::path>& sources, const fs::path& out_dir,
                                 std::ostream& log);

/// Trajectory dump for one source: step WAVs plus
/// trajectory_stats.tsv (step, rms, min, max, hf_rms). Defaults the snapshot
/// set to 1, 2N/10, 3N/10, ..., N when the config has none.
fs::path cmd_diagnose(const RunConfig& config, const fs::path& checkpoint, const fs::path& source,
                      const fs::path& out_dir, std::ostream& log);

/// Runs the analytic battery and prints its table; returns overall pass.
bool cmd_validate(const RunConfig& config, std::ostream& report,
                  const ValidateOptions& base = {});

/// Default snapshot set for n reverse iterations: 1, 2n/10, ..., n.
std::vector<int> default_snapshots(int n_steps);

}  // namespace itowave
