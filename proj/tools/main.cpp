#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "itowave/commands.hpp"
#include "itowave/errors.hpp"

namespace {

enum Exit { kOk = 0, kConfig = 2, kData = 3, kNumerical = 4 };

}  // namespace

int main(int argc, char** argv) {
  using namespace itowave;
  CLI::App app{"ItoWave: VE-SDE diffusion vocoder"};
  app.require_subcommand(0, 1);

  std::string config_path, preset = "wide";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  bool print_config = false;
  app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--preset", preset, "base settings before --config")
      ->check(CLI::IsMember({"paper", "wide", "desk"}));
  app.add_option("--seed", seed, "overrides train.seed, sample.seed and split.seed");
  app.add_option("--set", overrides, "extra section.key=value overrides");
  app.add_flag("--print-config", print_config, "print the effective config and exit");

  auto* features = app.add_subcommand("features", "cache mel spectrograms and write a manifest");
  std::string input_dir;
  features->add_option("--input", input_dir, "WAV directory (default paths.dataset_dir)");

  auto* train = app.add_subcommand("train", "DSM training; resumes from the newest checkpoint");

  auto* sample = app.add_subcommand("sample", "generate waveforms from mels");
  std::string checkpoint, out_dir, snapshots;
  std::vector<std::string> mels;
  sample->add_option("--checkpoint", checkpoint, "default: newest in paths.checkpoint_dir");
  sample->add_option("--mel", mels, ".wav or .mel conditioning sources")->required();
  sample->add_option("--out", out_dir, "default paths.output_dir");
  sample->add_option("--snapshots", snapshots, "comma list of iterations to dump");

  auto* diagnose = app.add_subcommand("diagnose", "per-step snapshots and trajectory_stats.tsv");
  std::string diag_mel;
  diagnose->add_option("--checkpoint", checkpoint, "default: newest in paths.checkpoint_dir");
  diagnose->add_option("--mel", diag_mel, ".wav or .mel conditioning source")->required();
  diagnose->add_option("--out", out_dir, "default paths.output_dir/diagnose");
  diagnose->add_option("--snapshots", snapshots, "comma list of iterations to dump");

  auto* validate = app.add_subcommand("validate", "analytic validation battery");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    RunConfig config = RunConfig::preset(preset);
    if (!config_path.empty()) config = load_config(config_path, config);
    if (seed) {
      config.train.seed = *seed;
      config.sample.seed = *seed;
      config.split.seed = *seed;
    }
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      set_config_value(config, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!snapshots.empty()) set_config_value(config, "sample.snapshot_steps", snapshots);
    config.validate();

    if (print_config) {
      std::cout << serialize_config(config);
      return kOk;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return kConfig;
    }
    if (*features) {
      cmd_features(config, input_dir.empty() ? config.paths.dataset_dir : fs::path(input_dir),
                   std::cerr);
    } else if (*train) {
      cmd_train(config, std::cerr);
    } else if (*sample) {
      std::vector<fs::path> sources(mels.begin(), mels.end());
      cmd_sample(config, checkpoint, sources,
                 out_dir.empty() ? config.paths.output_dir : fs::path(out_dir), std::cerr);
    } else if (*diagnose) {
      cmd_diagnose(config, checkpoint, diag_mel,
                   out_dir.empty() ? config.paths.output_dir / "diagnose" : fs::path(out_dir),
                   std::cerr);
    } else if (*validate) {
      return cmd_validate(config, std::cout) ? kOk : kNumerical;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfig;
  }
  return kOk;
}
