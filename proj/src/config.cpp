#include "itowave/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "itowave/errors.hpp"

namespace itowave {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError(key + ": cannot parse '" + text + "' as a number");
  }
  return v;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Entry {
  std::string key;
  std::string doc;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
Entry number(std::string key, std::string doc, std::function<T&(RunConfig&)> ref) {
  auto get = [ref](const RunConfig& c) {
    T v = ref(const_cast<RunConfig&>(c));
    if constexpr (std::is_floating_point_v<T>) {
      return fmt_double(v);
    } else {
      return std::to_string(v);
    }
  };
  auto set = [ref, key](RunConfig& c, const std::string& s) { ref(c) = parse_number<T>(key, s); };
  return {std::move(key), std::move(doc), get, set};
}

Entry path(std::string key, std::string doc,
           std::function<std::filesystem::path&(RunConfig&)> ref) {
  auto get = [ref](const RunConfig& c) { return ref(const_cast<RunConfig&>(c)).string(); };
  auto set = [ref](RunConfig& c, const std::string& s) { ref(c) = s; };
  return {std::move(key), std::move(doc), get, set};
}

template <typename E>
Entry choice(std::string key, std::string doc, std::function<E&(RunConfig&)> ref,
             std::vector<std::pair<std::string, E>> names) {
  auto get = [ref, names](const RunConfig& c) {
    const E v = ref(const_cast<RunConfig&>(c));
    for (const auto& [n, e] : names)
      if (e == v) return n;
    return std::string("?");
  };
  auto set = [ref, names, key](RunConfig& c, const std::string& s) {
    for (const auto& [n, e] : names) {
      if (n == s) {
        ref(c) = e;
        return;
      }
    }
    std::string allowed;
    for (const auto& [n, e] : names) allowed += (allowed.empty() ? "" : ", ") + n;
    throw ConfigError(key + ": '" + s + "' is not one of {" + allowed + "}");
  };
  return {std::move(key), std::move(doc), get, set};
}

const std::vector<Entry>& entries() {
  using R = RunConfig;
  static const std::vector<Entry> table = {
      number<int>("feature.sample_rate", "Hz; inputs at other rates are rejected",
                  [](R& c) -> int& { return c.feature.sample_rate; }),
      number<int>("feature.win_length", "Hann window length",
                  [](R& c) -> int& { return c.feature.win_length; }),
      number<int>("feature.hop_length", "samples per mel frame",
                  [](R& c) -> int& { return c.feature.hop_length; }),
      number<int>("feature.n_fft", "FFT size", [](R& c) -> int& { return c.feature.n_fft; }),
      number<int>("feature.n_mels", "mel channels", [](R& c) -> int& { return c.feature.n_mels; }),
      number<double>("feature.fmin", "lowest filter edge, Hz",
                     [](R& c) -> double& { return c.feature.fmin; }),
      number<double>("feature.fmax", "highest filter edge, Hz",
                     [](R& c) -> double& { return c.feature.fmax; }),
      number<double>("feature.log_floor", "mel energies are clamped here before log",
                     [](R& c) -> double& { return c.feature.log_floor; }),

      number<double>("sde.sigma0", "noise scale at t = 0",
                     [](R& c) -> double& { return c.sde.sigma0; }),
      number<double>("sde.sigma1", "noise scale at t = t_max; prior is N(0, sigma1^2)",
                     [](R& c) -> double& { return c.sde.sigma1; }),
      number<double>("sde.t_max", "diffusion horizon", [](R& c) -> double& { return c.sde.t_max; }),
      number<double>("sde.t_min", "lower cutoff for training times",
                     [](R& c) -> double& { return c.sde.t_min; }),
      number<int>("sde.n_steps", "forward-simulation steps",
                  [](R& c) -> int& { return c.sde.n_steps; }),

      number<int>("model.residual_layers", "dilated residual blocks",
                  [](R& c) -> int& { return c.model.residual_layers; }),
      number<int>("model.residual_channels", "channels inside blocks",
                  [](R& c) -> int& { return c.model.residual_channels; }),
      number<int>("model.skip_channels", "skip projection width",
                  [](R& c) -> int& { return c.model.skip_channels; }),
      number<int>("model.dilation_cycle", "block i uses dilation 2^(i mod cycle)",
                  [](R& c) -> int& { return c.model.dilation_cycle; }),
      number<int>("model.kernel_size", "odd dilated-conv kernel",
                  [](R& c) -> int& { return c.model.kernel_size; }),
      number<int>("model.mel_bins", "must equal feature.n_mels",
                  [](R& c) -> int& { return c.model.mel_bins; }),
      number<int>("model.upsample_stride1", "first transposed conv stride",
                  [](R& c) -> int& { return c.model.upsample_strides[0]; }),
      number<int>("model.upsample_stride2", "second stride; product must equal hop",
                  [](R& c) -> int& { return c.model.upsample_strides[1]; }),
      number<int>("model.time_embed_dim", "sinusoidal embedding width (even)",
                  [](R& c) -> int& { return c.model.time_embed_dim; }),
      number<double>("model.time_scale", "t multiplier inside the sinusoids",
                     [](R& c) -> double& { return c.model.time_scale; }),
      number<double>("model.mel_offset", "network sees (mel - offset) / scale",
                     [](R& c) -> double& { return c.model.mel_offset; }),
      number<double>("model.mel_scale", "see mel_offset",
                     [](R& c) -> double& { return c.model.mel_scale; }),
      choice<OutputScaling>("model.output_scaling", "inverse_std divides the head by sqrt(var(t))",
                            [](R& c) -> OutputScaling& { return c.model.output_scaling; },
                            {{"none", OutputScaling::kNone},
                             {"inverse_std", OutputScaling::kInverseStd}}),

      number<int>("train.batch_size", "segments per step",
                  [](R& c) -> int& { return c.train.batch_size; }),
      number<int>("train.segment_length", "crop length in samples; multiple of hop",
                  [](R& c) -> int& { return c.train.segment_length; }),
      number<int>("train.max_steps", "stop after this many steps",
                  [](R& c) -> int& { return c.train.max_steps; }),
      choice<LossNorm>("train.loss_norm", "l2 or l1",
                       [](R& c) -> LossNorm& { return c.train.loss_norm; },
                       {{"l2", LossNorm::kL2}, {"l1", LossNorm::kL1}}),
      choice<LossWeighting>("train.loss_weighting", "variance multiplies each term by var(t)",
                            [](R& c) -> LossWeighting& { return c.train.loss_weighting; },
                            {{"variance", LossWeighting::kVariance},
                             {"none", LossWeighting::kNone}}),
      number<double>("train.learning_rate", "Adam step size",
                     [](R& c) -> double& { return c.train.adam.learning_rate; }),
      number<double>("train.beta1", "Adam first-moment decay",
                     [](R& c) -> double& { return c.train.adam.beta1; }),
      number<double>("train.beta2", "Adam second-moment decay",
                     [](R& c) -> double& { return c.train.adam.beta2; }),
      number<double>("train.epsilon", "Adam denominator epsilon",
                     [](R& c) -> double& { return c.train.adam.epsilon; }),
      number<int>("train.checkpoint_every", "write step_{N}.ckpt every N steps",
                  [](R& c) -> int& { return c.train.checkpoint_every; }),
      number<std::uint64_t>("train.seed", "init and data-order seed",
                            [](R& c) -> std::uint64_t& { return c.train.seed; }),

      number<int>("sample.n_steps", "reverse iterations N",
                  [](R& c) -> int& { return c.sample.n_steps; }),
      number<int>("sample.corrector_steps", "Langevin steps per iteration",
                  [](R& c) -> int& { return c.sample.corrector_steps_per_iter; }),
      number<double>("sample.snr", "r in eps = 2 (r |xi| / |score|)^2",
                     [](R& c) -> double& { return c.sample.snr; }),
      choice<EpsilonRule>("sample.epsilon_rule", "snr_adaptive or fixed",
                          [](R& c) -> EpsilonRule& { return c.sample.epsilon_rule; },
                          {{"snr_adaptive", EpsilonRule::kSnrAdaptive},
                           {"fixed", EpsilonRule::kFixed}}),
      number<double>("sample.fixed_epsilon", "eps for the fixed rule and zero-score fallback",
                     [](R& c) -> double& { return c.sample.fixed_epsilon; }),
      number<std::uint64_t>("sample.seed", "generation seed; chain i uses stream i",
                            [](R& c) -> std::uint64_t& { return c.sample.seed; }),
      Entry{"sample.snapshot_steps", "completed iterations to dump, e.g. 1,200,400",
            [](const R& c) {
              std::string s;
              for (int v : c.sample.snapshot_steps) s += (s.empty() ? "" : ",") + std::to_string(v);
              return s;
            },
            [](R& c, const std::string& s) {
              c.sample.snapshot_steps.clear();
              for (const std::string& item : split_list(s)) {
                c.sample.snapshot_steps.push_back(parse_number<int>("sample.snapshot_steps", item));
              }
            }},

      number<std::uint64_t>("split.seed", "train/valid/test shuffle seed",
                            [](R& c) -> std::uint64_t& { return c.split.seed; }),
      number<double>("split.valid_fraction", "share of files held out for validation",
                     [](R& c) -> double& { return c.split.valid_fraction; }),
      number<double>("split.test_fraction", "share of files held out for test",
                     [](R& c) -> double& { return c.split.test_fraction; }),

      path("paths.dataset_dir", "input WAV directory",
           [](R& c) -> std::filesystem::path& { return c.paths.dataset_dir; }),
      path("paths.cache_dir", "mel caches and manifest",
           [](R& c) -> std::filesystem::path& { return c.paths.cache_dir; }),
      path("paths.checkpoint_dir", "checkpoints and metrics.tsv",
           [](R& c) -> std::filesystem::path& { return c.paths.checkpoint_dir; }),
      path("paths.output_dir", "generated audio",
           [](R& c) -> std::filesystem::path& { return c.paths.output_dir; }),
  };
  return table;
}

}  // namespace

RunConfig RunConfig::preset(const std::string& name) {
  RunConfig c;
  if (name == "paper") {
    c.sde = SdeSpec::paper();
    c.model = ScoreNetConfig::full();
  } else if (name == "wide") {
    c.sde = SdeSpec::wide();
    c.model = ScoreNetConfig::full();
  } else if (name == "desk") {
    c.sde = SdeSpec::wide();
    c.model = ScoreNetConfig::desk();
    c.train.batch_size = 1;
    c.train.segment_length = 4096;
    c.train.max_steps = 3000;
    c.train.adam.learning_rate = 1e-3;
    c.train.checkpoint_every = 500;
  } else {
    throw ConfigError("unknown preset '" + name + "' (expected paper, wide or desk)");
  }
  return c;
}

void RunConfig::validate() const {
  feature.validate();
  sde.validate();
  if (model.mel_bins != feature.n_mels) {
    throw ConfigError("model.mel_bins = " + std::to_string(model.mel_bins) +
                      " but feature.n_mels = " + std::to_string(feature.n_mels));
  }
  if (model.hop_length() != feature.hop_length) {
    throw ConfigError("model.upsample_stride1 * model.upsample_stride2 = " +
                      std::to_string(model.hop_length()) + " but feature.hop_length = " +
                      std::to_string(feature.hop_length));
  }
  model.validate(feature.hop_length);
  train.validate(feature.hop_length);
  sample.validate();
  if (!(split.valid_fraction >= 0.0) || !(split.test_fraction >= 0.0) ||
      !(split.valid_fraction + split.test_fraction < 1.0)) {
    throw ConfigError("split fractions must be >= 0 and sum below 1");
  }
}

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  for (const Entry& e : entries()) {
    if (e.key == key) {
      e.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set_config_value(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  std::string section;
  for (const Entry& e : entries()) {
    const std::string sec = e.key.substr(0, e.key.find('.'));
    if (sec != section) {
      if (!section.empty()) out += '\n';
      section = sec;
    }
    out += e.key + " = " + e.get(config) + "  # " + e.doc + '\n';
  }
  return out;
}

void save_config(const std::filesystem::path& path, const RunConfig& config) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << serialize_config(config);
}

}  // namespace itowave
