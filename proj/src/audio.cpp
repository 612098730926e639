#include "itowave/audio.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>
#include <sstream>

#include "itowave/binary_io.hpp"
#include "itowave/errors.hpp"

namespace itowave::audio {

namespace {

std::uint32_t get_u32(const unsigned char* p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t get_u16(const unsigned char* p) { return static_cast<std::uint16_t>(p[0] | (p[1] << 8)); }

void put_u32(std::ostream& out, std::uint32_t v) { binary::write_le(out, v); }
void put_u16(std::ostream& out, std::uint16_t v) { binary::write_le(out, v); }

constexpr char kMelMagic[8] = {'I', 'T', 'W', 'M', 'E', 'L', '\0', '\0'};
constexpr std::uint32_t kMelVersion = 1;

// Mirror index into [0, n) without repeating the edge sample.
std::size_t reflect_index(long i, long n) {
  if (n == 1) return 0;
  const long period = 2 * (n - 1);
  long m = i % period;
  if (m < 0) m += period;
  return static_cast<std::size_t>(m < n ? m : period - m);
}

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path, int expected_rate) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open WAV file: " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = get_u32(chunk + 4);
    const std::size_t body = pos + 8;
    const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (avail < 16) throw FormatError("truncated fmt chunk in " + path.string());
      format = get_u16(chunk + 8);
      channels = get_u16(chunk + 10);
      rate = get_u32(chunk + 12);
      bits = get_u16(chunk + 22);
      if (format == 0xFFFE && avail >= 26) format = get_u16(chunk + 32);
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = chunk + 8;
      data_size = avail;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt || data == nullptr) throw FormatError("missing fmt or data chunk: " + path.string());
  const bool pcm = format == 1 && (bits == 16 || bits == 24 || bits == 32);
  const bool flt = format == 3 && (bits == 32 || bits == 64);
  if (!pcm && !flt) {
    std::ostringstream msg;
    msg << "unsupported WAV encoding (format " << format << ", " << bits
        << " bits): " << path.string();
    throw FormatError(msg.str());
  }
  if (channels == 0) throw FormatError("WAV declares zero channels: " + path.string());
  if (expected_rate > 0 && static_cast<int>(rate) != expected_rate) {
    std::ostringstream msg;
    msg << "sample rate " << rate << " Hz does not match configured " << expected_rate
        << " Hz (no resampling): " << path.string();
    throw DataError(msg.str());
  }

  const std::size_t bytes_per = bits / 8;
  const std::size_t frames = data_size / (bytes_per * channels);
  if (frames == 0) throw DataError("WAV file has no samples: " + path.string());

  Waveform wave;
  wave.sample_rate = static_cast<int>(rate);
  wave.samples.resize(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const unsigned char* s = data + (f * channels + c) * bytes_per;
      double v = 0.0;
      if (pcm && bits == 16) {
        v = static_cast<std::int16_t>(get_u16(s)) / 32768.0;
      } else if (pcm && bits == 24) {
        std::int32_t iv = s[0] | (s[1] << 8) | (s[2] << 16);
        if (iv & 0x800000) iv -= 0x1000000;
        v = iv / 8388608.0;
      } else if (pcm && bits == 32) {
        v = static_cast<std::int32_t>(get_u32(s)) / 2147483648.0;
      } else if (bits == 32) {
        v = std::bit_cast<float>(get_u32(s));
      } else {
        std::uint64_t u = get_u32(s) | (static_cast<std::uint64_t>(get_u32(s + 4)) << 32);
        v = std::bit_cast<double>(u);
      }
      acc += v;
    }
    wave.samples[f] = acc / channels;
  }
  return wave;
}

void write_wav(const std::filesystem::path& path, const Waveform& wave) {
  if (wave.samples.empty()) throw DataError("refusing to write an empty waveform: " + path.string());
  if (wave.sample_rate <= 0) throw DataError("invalid sample rate for " + path.string());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open WAV file for writing: " + path.string());
  const auto n = static_cast<std::uint32_t>(wave.samples.size());
  const std::uint32_t data_bytes = n * 2;
  out.write("RIFF", 4);
  put_u32(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(wave.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out.write("data", 4);
  put_u32(out, data_bytes);
  for (double x : wave.samples) {
    if (!std::isfinite(x)) throw NumericalError("non-finite sample while writing " + path.string());
    const double q = std::clamp(std::round(x * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  if (!out) throw DataError("failed writing " + path.string());
}

void FeatureConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("feature.sample_rate must be > 0");
  if (hop_length <= 0) throw ConfigError("feature.hop_length must be > 0");
  if (n_mels <= 0) throw ConfigError("feature.n_mels must be > 0");
  if (!(hop_length <= win_length && win_length <= n_fft)) {
    throw ConfigError("feature config needs hop_length <= win_length <= n_fft");
  }
  if (n_fft % 2 != 0) throw ConfigError("feature.n_fft must be even");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
    throw ConfigError("feature config needs 0 <= fmin < fmax <= sample_rate / 2");
  }
  if (!(log_floor > 0.0)) throw ConfigError("feature.log_floor must be > 0");
}

std::uint64_t FeatureConfig::fingerprint() const {
  std::ostringstream s;
  s.precision(17);
  s << "sr=" << sample_rate << ";win=" << win_length << ";hop=" << hop_length
    << ";nfft=" << n_fft << ";nmels=" << n_mels << ";fmin=" << fmin << ";fmax=" << fmax
    << ";floor=" << log_floor << ";window=hann;center=reflect;power=2;log=ln";
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

MelSpectrogram MelSpectrogram::slice(std::size_t first, std::size_t count) const {
  if (first + count > n_frames) {
    throw ShapeError("mel slice [" + std::to_string(first) + ", " + std::to_string(first + count) +
                     ") exceeds " + std::to_string(n_frames) + " frames");
  }
  MelSpectrogram out;
  out.n_frames = count;
  out.n_mels = n_mels;
  out.config_fingerprint = config_fingerprint;
  out.values.assign(values.begin() + static_cast<long>(first * n_mels),
                    values.begin() + static_cast<long>((first + count) * n_mels));
  return out;
}

MelSpectrogram MelSpectrogram::aligned() const {
  if (n_frames < 2) throw ShapeError("mel has too few frames to align");
  return slice(0, n_frames - 1);
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> analysis_window(const FeatureConfig& config) {
  std::vector<double> w(config.n_fft, 0.0);
  const int offset = (config.n_fft - config.win_length) / 2;
  for (int i = 0; i < config.win_length; ++i) {
    w[offset + i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / config.win_length);
  }
  return w;
}

std::vector<double> windowed_frame(const Waveform& wave, const FeatureConfig& config,
                                   std::size_t frame) {
  const std::vector<double> window = analysis_window(config);
  const long n = static_cast<long>(wave.samples.size());
  const long start = static_cast<long>(frame) * config.hop_length - config.n_fft / 2;
  std::vector<double> out(config.n_fft);
  for (int i = 0; i < config.n_fft; ++i) {
    out[i] = window[i] * wave.samples[reflect_index(start + i, n)];
  }
  return out;
}

Spectrogram stft(const Waveform& wave, const FeatureConfig& config) {
  config.validate();
  if (wave.samples.empty()) throw DataError("stft of an empty waveform");
  const std::size_t n_frames = wave.samples.size() / config.hop_length + 1;
  const std::size_t n_bins = config.n_bins();
  Spectrogram spec;
  spec.n_frames = n_frames;
  spec.n_bins = n_bins;
  spec.values.resize(n_frames * n_bins);

  double* in = fftw_alloc_real(config.n_fft);
  fftw_complex* out = fftw_alloc_complex(n_bins);
  fftw_plan plan;
  {
    std::lock_guard lock(fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(config.n_fft, in, out, FFTW_ESTIMATE);
  }
  for (std::size_t f = 0; f < n_frames; ++f) {
    const std::vector<double> frame = windowed_frame(wave, config, f);
    std::copy(frame.begin(), frame.end(), in);
    fftw_execute(plan);
    for (std::size_t k = 0; k < n_bins; ++k) {
      spec.values[f * n_bins + k] = {out[k][0], out[k][1]};
    }
  }
  {
    std::lock_guard lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);
  return spec;
}

std::vector<double> mel_filterbank(const FeatureConfig& config) {
  config.validate();
  const int n_bins = config.n_bins();
  const int n_mels = config.n_mels;
  const double mel_lo = hz_to_mel(config.fmin), mel_hi = hz_to_mel(config.fmax);
  std::vector<double> edges(n_mels + 2);
  for (int i = 0; i < n_mels + 2; ++i) {
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
  }
  std::vector<double> fb(static_cast<std::size_t>(n_mels) * n_bins, 0.0);
  for (int m = 0; m < n_mels; ++m) {
    const double left = edges[m], center = edges[m + 1], right = edges[m + 2];
    bool any = false;
    for (int k = 0; k < n_bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate / config.n_fft;
      double w = 0.0;
      if (f > left && f <= center) {
        w = (f - left) / (center - left);
      } else if (f > center && f < right) {
        w = (right - f) / (right - center);
      }
      fb[static_cast<std::size_t>(m) * n_bins + k] = w;
      any = any || w > 0.0;
    }
    if (!any) {
      std::ostringstream msg;
      msg << "mel filter " << m << " (" << left << "-" << right
          << " Hz) covers no FFT bin; reduce n_mels or raise n_fft";
      throw ConfigError(msg.str());
    }
  }
  return fb;
}

MelSpectrogram mel_from_power(const std::vector<double>& power, std::size_t n_frames,
                              const FeatureConfig& config) {
  const std::vector<double> fb = mel_filterbank(config);
  const std::size_t n_bins = config.n_bins(), n_mels = config.n_mels;
  if (power.size() != n_frames * n_bins) throw ShapeError("power spectrogram size mismatch");
  MelSpectrogram mel;
  mel.n_frames = n_frames;
  mel.n_mels = n_mels;
  mel.config_fingerprint = config.fingerprint();
  mel.values.resize(n_frames * n_mels);
  for (std::size_t f = 0; f < n_frames; ++f) {
    for (std::size_t m = 0; m < n_mels; ++m) {
      double e = 0.0;
      for (std::size_t k = 0; k < n_bins; ++k) e += fb[m * n_bins + k] * power[f * n_bins + k];
      mel.values[f * n_mels + m] = std::log(std::max(e, config.log_floor));
    }
  }
  return mel;
}

MelSpectrogram mel_spectrogram(const Waveform& wave, const FeatureConfig& config) {
  config.validate();
  if (wave.sample_rate != config.sample_rate) {
    std::ostringstream msg;
    msg << "waveform sample rate " << wave.sample_rate << " Hz does not match feature config "
        << config.sample_rate << " Hz";
    throw DataError(msg.str());
  }
  const Spectrogram spec = stft(wave, config);
  std::vector<double> power(spec.values.size());
  for (std::size_t i = 0; i < power.size(); ++i) power[i] = std::norm(spec.values[i]);
  return mel_from_power(power, spec.n_frames, config);
}

void save_mel(const std::filesystem::path& path, const MelSpectrogram& mel) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open mel cache for writing: " + path.string());
  out.write(kMelMagic, sizeof(kMelMagic));
  binary::write_le<std::uint32_t>(out, kMelVersion);
  binary::write_le<std::uint64_t>(out, mel.config_fingerprint);
  binary::write_le<std::uint64_t>(out, mel.n_frames);
  binary::write_le<std::uint64_t>(out, mel.n_mels);
  for (double v : mel.values) binary::write_f64(out, v);
  if (!out) throw DataError("failed writing mel cache " + path.string());
}

MelSpectrogram load_mel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open mel cache: " + path.string());
  char magic[sizeof(kMelMagic)];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMelMagic, sizeof(magic)) != 0) {
    throw FormatError("not an itowave mel cache: " + path.string());
  }
  const auto version = binary::read_le<std::uint32_t>(in, "mel cache version");
  if (version != kMelVersion) throw FormatError("unsupported mel cache version");
  MelSpectrogram mel;
  mel.config_fingerprint = binary::read_le<std::uint64_t>(in, "fingerprint");
  mel.n_frames = binary::read_le<std::uint64_t>(in, "frame count");
  mel.n_mels = binary::read_le<std::uint64_t>(in, "mel count");
  if (mel.n_frames * mel.n_mels > (std::size_t{1} << 32)) {
    throw FormatError("implausible mel cache size: " + path.string());
  }
  mel.values.resize(mel.n_frames * mel.n_mels);
  for (double& v : mel.values) v = binary::read_f64(in, "mel values");
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after mel cache payload: " + path.string());
  }
  return mel;
}

void check_fingerprint(const MelSpectrogram& mel, const FeatureConfig& config) {
  if (mel.config_fingerprint != config.fingerprint()) {
    std::ostringstream msg;
    msg << "mel feature fingerprint " << std::hex << mel.config_fingerprint
        << " does not match the configured features " << config.fingerprint();
    throw ConfigError(msg.str());
  }
  if (mel.n_mels != static_cast<std::size_t>(config.n_mels)) {
    throw ConfigError("mel has " + std::to_string(mel.n_mels) + " bins, config expects " +
                      std::to_string(config.n_mels));
  }
}

}  // namespace itowave::audio
