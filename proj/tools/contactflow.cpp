// contactflow <subcommand> --config <path> [--seed N] [--out DIR] [--threads K]
//
// Exit status: 0 when every check passed, 1 when a check failed, 2 for a
// configuration or usage error.

#include "contactflow/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <thread>

using namespace contactflow;

namespace {

std::string short_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experiments on contact suspension flows"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  for (const auto& name : experiment_names()) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--seed", seed, "override the configured seed");
    sub->add_option("--out", out_dir, "override the output directory");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  const std::string subcommand = app.get_subcommands().front()->get_name();

  RunManifest manifest;
  try {
    ExperimentConfig config = load_config(config_path);
    const auto raw = nlohmann::json::parse(std::ifstream(config_path), nullptr, false, true);
    if (raw.is_object() && raw.contains("experiment") && config.experiment != subcommand)
      throw Error(ErrorKind::ConfigError,
                  "'experiment': config is for '" + config.experiment + "', not '" + subcommand + "'");
    config.experiment = subcommand;
    if (seed) config.seed = *seed;
    if (out_dir) config.output_dir = *out_dir;
    manifest = run(config, threads);
  } catch (const Error& e) {
    std::cerr << "contactflow: " << e.what() << "\n";
    return e.kind() == ErrorKind::ConfigError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "contactflow: " << e.what() << "\n";
    return 1;
  }

  for (const auto& note : manifest.notes) std::cout << "  " << note << "\n";
  for (const auto& c : manifest.checks) {
    std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  value " << short_num(c.value) << "  threshold "
              << short_num(c.threshold);
    if (!c.detail.empty()) std::cout << "  (" << c.detail << ")";
    std::cout << "\n";
  }
  std::cout << manifest.experiment << ": " << (manifest.passed() ? "passed" : "FAILED") << " in "
            << short_num(manifest.wall_time) << " s, config " << manifest.config_hash << "\n";
  return manifest.passed() ? 0 : 1;
}
