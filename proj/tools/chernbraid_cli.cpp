// chernbraid: batch runner for adiabatic transport experiments.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "chernbraid/experiment.hpp"

namespace fs = std::filesystem;
using namespace chernbraid;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitStepFailure = 3;

bool write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  return static_cast<bool>(out);
}

int run(const std::string& config_path, int jobs, const fs::path& out_dir,
        const std::optional<fs::path>& preset_dir) {
  std::ifstream in(config_path, std::ios::binary);
  if (!in) {
    std::cerr << "error: cannot read config " << config_path << "\n";
    return kExitUsage;
  }
  std::ostringstream text;
  text << in.rdbuf();

  RunConfig config;
  try {
    config = parse_run_config(text.str(), preset_dir);
  } catch (const UnknownPreset& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: malformed config: " << e.what() << "\n"
              << "usage: chernbraid run <config.json> [--jobs N] [--out DIR]\n";
    return kExitUsage;
  }

  RunResult result;
  try {
    result = run_experiments(config, {jobs});
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  bool ok = write_text(out_dir / "results.csv", results_csv(result)) &&
            write_text(out_dir / "summary.json", summary_json(config, result));
  if (!result.densities.empty()) ok = ok && write_text(out_dir / "densities.csv", densities_csv(result));
  if (!ok) {
    std::cerr << "error: cannot write results to " << out_dir << "\n";
    return 1;
  }

  for (const StepFailure& f : result.failures) {
    std::cerr << "sweep failed: experiment " << f.experiment << " R=" << f.R << " delta_phi=" << f.delta_phi;
    if (f.step) std::cerr << " step " << *f.step;
    std::cerr << ": " << f.message << "\n";
  }
  std::cout << result.rows.size() << " rows written to " << (out_dir / "results.csv").string() << "\n";
  return result.failures.empty() ? 0 : kExitStepFailure;
}

int list(const std::optional<fs::path>& preset_dir) {
  const auto presets = list_presets(preset_dir);
  std::size_t w = 4;
  for (const auto& p : presets) w = std::max(w, p.name.size());
  std::printf("%-*s  %s\n", static_cast<int>(w), "name", "description");
  for (const auto& p : presets) std::printf("%-*s  %s\n", static_cast<int>(w), p.name.c_str(), p.description.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adiabatic transport of pinned particles and holes in Hofstadter lattices"};
  app.require_subcommand(1);
  std::string preset_dir_arg;
  app.add_option("--preset-dir", preset_dir_arg, "Directory with additional <name>.json presets");

  auto* run_cmd = app.add_subcommand("run", "Run the experiments of a JSON config");
  std::string config_path;
  int jobs = 0;
  std::string out_dir = ".";
  run_cmd->add_option("config", config_path, "Config file")->required();
  run_cmd->add_option("--jobs,-j", jobs, "Worker threads (default: all cores)")->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--out,-o", out_dir, "Output directory");

  auto* list_cmd = app.add_subcommand("list-presets", "Print the available presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  std::optional<fs::path> preset_dir;
  if (!preset_dir_arg.empty()) preset_dir = preset_dir_arg;
  if (*list_cmd) return list(preset_dir);
  return run(config_path, jobs, out_dir, preset_dir);
}
