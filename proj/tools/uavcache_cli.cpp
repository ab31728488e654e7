// Command-line front end: run, sweep, plot and validate scenario files.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uavcache/harness.hpp"

namespace fs = std::filesystem;
using namespace uavcache;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kRuntime = 2;

struct Overrides {
  std::vector<std::uint64_t> seeds;
  long slots = -1;
  std::string agents;
  std::string out;
};

std::string output_root(const Overrides& o) {
  if (!o.out.empty()) return o.out;
  if (const char* env = std::getenv("UAVCACHE_OUT"); env && *env) return env;
  return "results";
}

harness::ScenarioConfig load_with_overrides(const std::string& path, const Overrides& o) {
  auto config = harness::load_config(path);
  if (!o.seeds.empty()) config.seeds = o.seeds;
  if (o.slots >= 0) config.slots = o.slots;
  if (!o.agents.empty()) {
    config.agents.clear();
    std::stringstream in(o.agents);
    std::string name;
    while (std::getline(in, name, ',')) {
      if (!name.empty()) config.agents.push_back(name);
    }
  }
  config.validate();
  return config;
}

int execute(const std::string& path, const Overrides& o, bool sweep) {
  auto config = load_with_overrides(path, o);
  if (sweep && config.axis == harness::SweepAxis::none) {
    throw std::invalid_argument(path + ": sweep needs [sweep] axis and values");
  }
  if (!sweep) {
    config.axis = harness::SweepAxis::none;
    config.sweep_values.clear();
  }
  std::cerr << "# effective configuration\n" << harness::render_config(config) << '\n';
  const auto dir = (fs::path(output_root(o)) / config.scenario_id).string();
  const auto rows = harness::run_experiment(config, dir, &std::cerr);
  std::cout << "wrote " << rows.size() << " runs to " << dir << '\n';
  return kOk;
}

int plot(const std::string& csv_dir, const std::string& out_dir) {
  if (!fs::is_directory(csv_dir)) throw harness::SchemaError(csv_dir + " is not a directory");
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(csv_dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".csv") paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  for (const auto& file : harness::emit_plots(paths, out_dir)) std::cout << file << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UAV caching and NOMA scheduling simulator"};
  app.require_subcommand(1);
  Overrides o;
  std::string config_path;
  std::string csv_dir;
  std::string plot_dir;

  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("config", config_path, "Scenario file")->required();
    cmd->add_option("--seed", o.seeds, "Seed list replacing the file's seeds")->delimiter(',');
    cmd->add_option("--slots", o.slots, "Slots per run")->check(CLI::NonNegativeNumber);
    cmd->add_option("--agents", o.agents, "Comma-separated agents (greedy, ql, fa, fixed, random)");
    cmd->add_option("--out", o.out, "Output root (default $UAVCACHE_OUT, else ./results)");
  };
  auto* run = app.add_subcommand("run", "Run every agent and seed of a scenario, ignoring any sweep");
  add_overrides(run);
  auto* sweep = app.add_subcommand("sweep", "Run every sweep point of a scenario");
  add_overrides(sweep);
  auto* plot_cmd = app.add_subcommand("plot", "Render SVG plots from a directory of CSV files");
  plot_cmd->add_option("csv_dir", csv_dir, "Directory of metrics or summary CSVs")->required();
  plot_cmd->add_option("out_dir", plot_dir, "Directory for the images")->required();
  auto* validate = app.add_subcommand("validate", "Parse and validate a scenario file");
  validate->add_option("config", config_path, "Scenario file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }

  try {
    if (*run) return execute(config_path, o, false);
    if (*sweep) return execute(config_path, o, true);
    if (*plot_cmd) return plot(csv_dir, plot_dir);
    if (*validate) {
      const auto config = harness::load_config(config_path);
      std::cout << harness::render_config(config);
      return kOk;
    }
  } catch (const harness::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kValidation;
  } catch (const harness::SchemaError& e) {
    std::cerr << "schema error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kRuntime;
}
