#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace itowave::audio {

/// Mono signal. Samples are expected in [-1, 1].
struct Waveform {
  std::vector<double> samples;
  int sample_rate = 22050;
};

/// Reads RIFF/WAVE with 16/24/32-bit integer or 32-bit float PCM; multichannel
/// files are averaged to mono. Throws FormatError for anything else, and
/// DataError for an empty data chunk. When `expected_rate` > 0 a mismatching
/// sample rate throws DataError (no resampling).
Waveform read_wav(const std::filesystem::path& path, int expected_rate = 0);

/// Writes 16-bit PCM mono. Samples are quantized as round(x * 32768) clamped to
/// the int16 range, so the round-trip error is at most 2^-15.
void write_wav(const std::filesystem::path& path, const Waveform& wave);

struct FeatureConfig {
  int sample_rate = 22050;
  int win_length = 1024;
  int hop_length = 256;
  int n_fft = 1024;
  int n_mels = 80;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-5;

  void validate() const;
  /// FNV-1a over the canonical text form of every field.
  std::uint64_t fingerprint() const;
  int n_bins() const { return n_fft / 2 + 1; }

  bool operator==(const FeatureConfig&) const = default;
};

/// n_frames x (n_fft/2 + 1), row-major.
struct Spectrogram {
  std::size_t n_frames = 0;
  std::size_t n_bins = 0;
  std::vector<std::complex<double>> values;

  std::complex<double> at(std::size_t frame, std::size_t bin) const {
    return values[frame * n_bins + bin];
  }
};

/// Log-mel matrix, n_frames x n_mels row-major.
struct MelSpectrogram {
  std::size_t n_frames = 0;
  std::size_t n_mels = 0;
  std::vector<double> values;
  std::uint64_t config_fingerprint = 0;

  double at(std::size_t frame, std::size_t mel) const { return values[frame * n_mels + mel]; }
  /// Frames [first, first + count).
  MelSpectrogram slice(std::size_t first, std::size_t count) const;
  /// Drops the final centered frame so frames * hop equals a hop-aligned length.
  MelSpectrogram aligned() const;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Periodic Hann window of win_length, zero-padded to n_fft (centered).
std::vector<double> analysis_window(const FeatureConfig& config);

/// Centered STFT with reflect padding of n_fft/2; floor(len / hop) + 1 frames.
Spectrogram stft(const Waveform& wave, const FeatureConfig& config);

/// Framed, windowed segment of `frame` (length n_fft) as used by stft().
std::vector<double> windowed_frame(const Waveform& wave, const FeatureConfig& config,
                                   std::size_t frame);

/// Triangular filters equally spaced on the mel scale, n_mels x (n_fft/2 + 1).
/// Throws ConfigError when a filter covers no FFT bin.
std::vector<double> mel_filterbank(const FeatureConfig& config);

/// log(max(filterbank * |STFT|^2, log_floor)). Throws DataError on a rate mismatch.
MelSpectrogram mel_spectrogram(const Waveform& wave, const FeatureConfig& config);

/// Mel from a precomputed power spectrogram (n_frames x n_bins).
MelSpectrogram mel_from_power(const std::vector<double>& power, std::size_t n_frames,
                              const FeatureConfig& config);

// Mel cache file, little-endian:
//   magic "ITWMEL\0\0" | u32 version | u64 fingerprint | u64 n_frames | u64 n_mels |
//   n_frames * n_mels f64 values (row-major)
void save_mel(const std::filesystem::path& path, const MelSpectrogram& mel);
MelSpectrogram load_mel(const std::filesystem::path& path);

/// Throws ConfigError when the mel was computed under a different FeatureConfig.
void check_fingerprint(const MelSpectrogram& mel, const FeatureConfig& config);

}  // namespace itowave::audio
