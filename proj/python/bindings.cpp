#include <pybind11/numpy.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <pybind11/pybind11.h>

#include <optional>
#include <sstream>

#include "itowave/commands.hpp"
#include "itowave/config.hpp"
#include "itowave/errors.hpp"
#include "itowave/noise.hpp"
#include "itowave/sampler.hpp"
#include "itowave/validate.hpp"

namespace py = pybind11;
using namespace itowave;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

std::vector<double> to_vec(const Array& a) { return {a.data(), a.data() + a.size()}; }

Array mel_array(const audio::MelSpectrogram& m) {
  Array out({m.n_frames, m.n_mels});
  std::copy(m.values.begin(), m.values.end(), out.mutable_data());
  return out;
}

Array tensor_array(const nn::Tensor& t) {
  Array out(t.shape());
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

nn::Tensor array_tensor(const Array& a) {
  nn::Shape shape(a.shape(), a.shape() + a.ndim());
  return nn::Tensor(shape, to_vec(a));
}

}  // namespace

PYBIND11_MODULE(_itowave, m) {
  m.doc() = "VE-SDE diffusion vocoder core";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_RuntimeError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<SdeSpec>(m, "SdeSpec")
      .def(py::init<>())
      .def_static("paper", &SdeSpec::paper)
      .def_static("wide", &SdeSpec::wide)
      .def_readwrite("sigma0", &SdeSpec::sigma0)
      .def_readwrite("sigma1", &SdeSpec::sigma1)
      .def_readwrite("t_max", &SdeSpec::t_max)
      .def_readwrite("t_min", &SdeSpec::t_min)
      .def_readwrite("n_steps", &SdeSpec::n_steps)
      .def("validate", &SdeSpec::validate)
      .def("__eq__", [](const SdeSpec& a, const SdeSpec& b) { return a == b; });

  m.def("diffusion_coeff", &diffusion_coeff, py::arg("spec"), py::arg("t"));
  m.def("diffusion_coeff_sq", &diffusion_coeff_sq, py::arg("spec"), py::arg("t"));
  m.def("transition_variance", &transition_variance, py::arg("spec"), py::arg("t"));
  m.def(
      "score_of_transition",
      [](const SdeSpec& s, const Array& x_t, const Array& x0, double t) {
        return score_of_transition(s, to_vec(x_t), to_vec(x0), t);
      },
      py::arg("spec"), py::arg("x_t"), py::arg("x0"), py::arg("t"));
  m.def(
      "log_transition_density",
      [](const SdeSpec& s, const Array& x_t, const Array& x0, double t) {
        return log_transition_density(s, to_vec(x_t), to_vec(x0), t);
      },
      py::arg("spec"), py::arg("x_t"), py::arg("x0"), py::arg("t"));
  m.def(
      "sample_transition",
      [](const SdeSpec& s, const Array& x0, double t, std::uint64_t seed) {
        RandomNoise noise(seed);
        TransitionSample r = sample_transition(s, to_vec(x0), t, noise);
        return py::make_tuple(r.x_t, r.target_score);
      },
      py::arg("spec"), py::arg("x0"), py::arg("t"), py::arg("seed") = 0,
      "Returns (x_t, target_score).");

  py::class_<audio::FeatureConfig>(m, "FeatureConfig")
      .def(py::init<>())
      .def_readwrite("sample_rate", &audio::FeatureConfig::sample_rate)
      .def_readwrite("win_length", &audio::FeatureConfig::win_length)
      .def_readwrite("hop_length", &audio::FeatureConfig::hop_length)
      .def_readwrite("n_fft", &audio::FeatureConfig::n_fft)
      .def_readwrite("n_mels", &audio::FeatureConfig::n_mels)
      .def_readwrite("fmin", &audio::FeatureConfig::fmin)
      .def_readwrite("fmax", &audio::FeatureConfig::fmax)
      .def_readwrite("log_floor", &audio::FeatureConfig::log_floor)
      .def("fingerprint", &audio::FeatureConfig::fingerprint);

  m.def(
      "read_wav",
      [](const std::filesystem::path& p, int rate) {
        audio::Waveform w = audio::read_wav(p, rate);
        return py::make_tuple(Array(w.samples.size(), w.samples.data()), w.sample_rate);
      },
      py::arg("path"), py::arg("expected_rate") = 0, "Returns (samples, sample_rate).");
  m.def(
      "write_wav",
      [](const std::filesystem::path& p, const Array& x, int rate) {
        audio::write_wav(p, {to_vec(x), rate});
      },
      py::arg("path"), py::arg("samples"), py::arg("sample_rate") = 22050);
  m.def(
      "mel_spectrogram",
      [](const Array& x, const audio::FeatureConfig& c, bool aligned) {
        audio::MelSpectrogram mel = audio::mel_spectrogram({to_vec(x), c.sample_rate}, c);
        return mel_array(aligned ? mel.aligned() : mel);
      },
      py::arg("samples"), py::arg("config") = audio::FeatureConfig{}, py::arg("aligned") = false,
      "Log-mel as [frames, n_mels].");

  py::class_<ScoreNetConfig>(m, "ScoreNetConfig")
      .def(py::init<>())
      .def_static("full", &ScoreNetConfig::full)
      .def_static("desk", &ScoreNetConfig::desk)
      .def_readwrite("residual_layers", &ScoreNetConfig::residual_layers)
      .def_readwrite("residual_channels", &ScoreNetConfig::residual_channels)
      .def_readwrite("skip_channels", &ScoreNetConfig::skip_channels)
      .def_readwrite("dilation_cycle", &ScoreNetConfig::dilation_cycle)
      .def_readwrite("time_embed_dim", &ScoreNetConfig::time_embed_dim)
      .def("hop_length", &ScoreNetConfig::hop_length);

  py::class_<ScoreNet>(m, "ScoreNet")
      .def(py::init<const ScoreNetConfig&, const SdeSpec&, std::uint64_t>(), py::arg("config"),
           py::arg("sde"), py::arg("init_seed") = 0)
      .def("parameter_count", &ScoreNet::parameter_count)
      .def(
          "score",
          [](ScoreNet& net, const Array& x_t, const std::vector<double>& t, const Array& mel) {
            return tensor_array(net.score(array_tensor(x_t), t, array_tensor(mel)));
          },
          py::arg("x_t"), py::arg("t"), py::arg("mel"),
          "x_t [B, L], one t per row, mel [B, n_mels, frames].");

  m.def(
      "generate_gaussian",
      [](const SdeSpec& spec, double mean, double var, std::size_t chains, int n_steps,
         int corrector_steps, std::uint64_t seed) {
        SamplerConfig c;
        c.n_steps = n_steps;
        c.corrector_steps_per_iter = corrector_steps;
        c.seed = seed;
        const GaussianTargetScore score(spec, mean, var);
        return tensor_array(generate(chains, 1, spec, score, c).samples);
      },
      py::arg("spec"), py::arg("mean"), py::arg("variance"), py::arg("chains") = 1000,
      py::arg("n_steps") = 1000, py::arg("corrector_steps") = 1, py::arg("seed") = 0,
      "Sampler run with the exact score of a N(mean, variance) target.");

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("preset", &RunConfig::preset)
      .def_readwrite("feature", &RunConfig::feature)
      .def_readwrite("sde", &RunConfig::sde)
      .def_readwrite("model", &RunConfig::model)
      .def("validate", &RunConfig::validate)
      .def("set", &set_config_value, py::arg("key"), py::arg("value"))
      .def("__str__", &serialize_config)
      .def("__eq__", [](const RunConfig& a, const RunConfig& b) { return a == b; });
  m.def(
      "parse_config", [](const std::string& text, const RunConfig& base) {
        return parse_config(text, base);
      },
      py::arg("text"), py::arg("base") = RunConfig{});

  m.def(
      "validate",
      [](std::uint64_t seed) {
        ValidateOptions o;
        o.seed = seed;
        ValidationReport r;
        {
          py::gil_scoped_release release;
          r = run_validation(o);
        }
        std::ostringstream s;
        r.print(s);
        return py::make_tuple(r.all_passed(), s.str());
      },
      py::arg("seed") = 0, "Analytic battery; returns (all_passed, report).");

  m.def(
      "features",
      [](const RunConfig& c, const std::filesystem::path& input_dir) {
        std::ostringstream log;
        return cmd_features(c, input_dir, log).manifest;
      },
      py::arg("config"), py::arg("input_dir"), "Returns the manifest path.");
  m.def(
      "train",
      [](const RunConfig& c) {
        std::ostringstream log;
        py::gil_scoped_release release;
        return cmd_train(c, log).losses;
      },
      py::arg("config"), "Returns the per-step losses.");
  m.def(
      "sample",
      [](const RunConfig& c, const std::vector<std::filesystem::path>& sources,
         const std::filesystem::path& out_dir,
         const std::optional<std::filesystem::path>& checkpoint) {
        std::ostringstream log;
        py::gil_scoped_release release;
        // No checkpoint means the newest one under paths.checkpoint_dir.
        return cmd_sample(c, checkpoint.value_or(std::filesystem::path{}), sources, out_dir, log);
      },
      py::arg("config"), py::arg("sources"), py::arg("out_dir"),
      py::arg("checkpoint") = py::none(), "Returns the written WAV paths.");
}
