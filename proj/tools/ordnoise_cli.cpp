#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "ordnoise/error.hpp"
#include "ordnoise/harness/commands.hpp"
#include "ordnoise/harness/config.hpp"

namespace h = ordnoise::harness;

namespace {

h::ExperimentConfig load(const std::string& path, std::optional<std::uint64_t> seed, bool data_seed) {
  auto cfg = h::load_config(path);
  if (seed) {
    if (data_seed) {
      cfg.dataset.seed = *seed;
      cfg.noise.seed = *seed;
    } else {
      cfg.seeds = {*seed};
    }
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Ordinal noisy-label training experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int jobs = 0;
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("gen-data", "Generate the dataset, inject noise and write it out");
  gen->add_option("--config", config_path, "Experiment config (JSON)")->required();
  gen->add_option("--out", out_dir, "Output directory (default: config output_dir)");
  gen->add_option("--seed", seed, "Override the dataset and noise seeds");

  auto* run = app.add_subcommand("run", "Run the method x fold x seed grid");
  run->add_option("--config", config_path, "Experiment config (JSON)")->required();
  run->add_option("--out", out_dir, "Output directory (default: config output_dir)");
  run->add_option("--jobs", jobs, "Worker threads (default: config jobs, else hardware concurrency)")
      ->check(CLI::NonNegativeNumber);
  run->add_option("--seed", seed, "Run a single training seed instead of the config's seed list");

  std::string results_dir;
  auto* plot = app.add_subcommand("plot", "Render SVG curves from a results directory");
  plot->add_option("results", results_dir, "Results directory written by 'run'")->required();
  plot->add_option("--out", out_dir, "Directory for the SVG files (default: <results>/plots)");

  auto* validate = app.add_subcommand("validate-config", "Check a config and print its resolved form");
  validate->add_option("--config", config_path, "Experiment config (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : h::kConfigError;
  }

  try {
    if (*gen) {
      auto cfg = load(config_path, seed, true);
      return h::cmd_gen_data(cfg, out_dir.empty() ? cfg.output_dir : out_dir);
    }
    if (*run) {
      auto cfg = load(config_path, seed, false);
      const int workers = jobs > 0 ? jobs : cfg.jobs;
      return h::cmd_run(cfg, out_dir.empty() ? cfg.output_dir : out_dir, workers);
    }
    if (*plot) {
      const std::filesystem::path dir = out_dir.empty() ? std::filesystem::path(results_dir) / "plots" : std::filesystem::path(out_dir);
      return h::cmd_plot(results_dir, dir);
    }
    if (*validate) return h::cmd_validate_config(h::load_config(config_path));
  } catch (const ordnoise::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return h::kConfigError;
  } catch (const ordnoise::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return *validate ? h::kConfigError : h::kAllFailed;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return *validate ? h::kConfigError : h::kAllFailed;
  }
  return 0;
}
