#include <cstdio>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sfa/config_file.hpp"
#include "sfa/harness.hpp"

namespace {

// 0 success, 2 config/usage error, 1 runtime failure.
int run(int argc, char** argv) {
  CLI::App app{"Factorised-encoder video transformer experiments"};
  app.set_help_flag("-h,--help", "Print usage");

  std::string preset = "single_run";
  std::optional<std::string> config_path;
  sfa::CliOverrides cli;

  std::string presets_doc;
  for (const std::string& n : sfa::preset_names())
    presets_doc += (presets_doc.empty() ? "" : ", ") + n;

  app.add_option("--preset", preset, "Experiment preset (" + presets_doc + ")");
  app.add_option("--config", config_path, "Flat key = value config file");
  app.add_option("--seed", cli.seed, "Run seed (initialization and shuffling)");
  app.add_option("--frames", cli.frames, "Frames per clip for single_run");
  app.add_option("--epochs", cli.epochs, "Epoch override (-1 keeps the preset value)");
  app.add_option("--stage", cli.stage, "single_run stage: 1 fresh, 2 transfer from --init");
  app.add_option("--init", cli.init, "Source checkpoint for stage 2");
  app.add_option("--out", cli.out, "Output directory");
  app.add_option("--precision", cli.precision, "Numeric mode: f32 or f64");
  app.add_option("--head", cli.head, "Stage-2 head policy: copy or reinit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    sfa::ConfigMap file;
    if (config_path) file = sfa::ConfigMap::parse_file(*config_path);
    if (cli.init && !cli.init->empty() && !std::filesystem::exists(*cli.init))
      throw sfa::ConfigError("checkpoint path '" + *cli.init + "' does not exist");
    const sfa::HarnessSetup setup = sfa::resolve_setup(file, cli);
    if (!setup.init_path.empty() && !std::filesystem::exists(setup.init_path))
      throw sfa::ConfigError("checkpoint path '" + setup.init_path + "' does not exist");
    sfa::run_preset(preset, setup);
    return 0;
  } catch (const sfa::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
