#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "monodyn/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{
      "monodyn: learn monotone stable system dynamics with constrained "
      "networks and verify the stability/error-bound properties"};

  std::string command;
  std::string config_path;
  std::string out_dir;
  long seed = -1;
  bool overwrite = false;

  app.add_option("command", command,
                 "simulate | train | predict | evaluate | verify | report "
                 "(optional when the config names one)");
  app.add_option("--config", config_path, "run configuration file")
      ->required();
  app.add_option("--seed", seed, "override the config's global seed");
  app.add_option("--out", out_dir, "override the output directory");
  app.add_flag("--overwrite", overwrite, "allow replacing checkpoints");

  CLI11_PARSE(app, argc, argv);

  using namespace monodyn;
  try {
    cli::RunConfig cfg = cli::parse_config_file(config_path);
    if (!command.empty()) cfg.command = cli::command_from_name(command);
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!out_dir.empty()) cfg.paths.out = out_dir;
    cli::RunOptions opts;
    opts.overwrite = overwrite;
    cli::run(cfg, opts);
    return 0;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "i/o error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
