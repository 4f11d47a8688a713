// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "sodiff/cli.hpp"

namespace sodiff::cli {

namespace {

int report(const char* kind, int code, const std::string& message) {
  nlohmann::ordered_json j;
  j["error"]["kind"] = kind;
  j["error"]["exit_code"] = code;
  j["error"]["message"] = message;
  if (std::string(kind) == "config") {
    const auto colon = message.find(": ");
    if (colon != std::string::npos) j["error"]["key"] = message.substr(0, colon);
  }
  std::cerr << j.dump() << '\n';
  return code;
}

}  // namespace

int main_entry(int argc, char** argv) {
  CLI::App app{"Spin-orbit neutron diffraction simulator"};
  app.require_subcommand(1);
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());
  std::uint64_t seed = 1;
  std::string log_level = "warn";
  app.add_option("--threads", threads, "Worker threads for grid builds")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Seed for Monte-Carlo sections");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error or off");

  std::string config_path;
  auto* run_cmd = app.add_subcommand("run", "Run a configuration file");
  run_cmd->add_option("config", config_path, "Configuration file")->required();

  std::string preset_name;
  std::string out_dir;
  auto* preset_cmd = app.add_subcommand("preset", "Run a shipped preset");
  preset_cmd->add_option("name", preset_name, "Preset name")->required();
  preset_cmd->add_option("--out", out_dir, "Output directory");

  auto* list_cmd = app.add_subcommand("list-presets", "List shipped presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    return report("usage", 2, e.what());
  }
  spdlog::set_level(spdlog::level::from_str(log_level));
  spdlog::set_default_logger(spdlog::default_logger());

  try {
    if (*list_cmd) {
      for (const auto& name : list_presets()) std::cout << name << '\n';
      return 0;
    }
    RunOptions options;
    options.threads = threads;
    options.seed = seed;
    RunConfig cfg;
    if (*preset_cmd) {
      cfg = load_config(preset_path(preset_name));
      options.output_override = out_dir.empty() ? std::filesystem::path(preset_name) : std::filesystem::path(out_dir);
    } else {
      cfg = load_config(config_path);
    }
    run(cfg, options);
    return 0;
  } catch (const ConfigError& e) {
    return report("config", 2, e.what());
  } catch (const PhysicsError& e) {
    return report("physics", 3, e.what());
  } catch (const IoError& e) {
    return report("io", 4, e.what());
  } catch (const std::domain_error& e) {
    return report("physics", 3, e.what());
  } catch (const std::exception& e) {
    return report("internal", 1, e.what());
  }
}

}  // namespace sodiff::cli
