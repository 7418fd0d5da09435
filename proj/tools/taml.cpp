#include <cstdint>
#include <iostream>
#include <iterator>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "taml/run/runner.hpp"

namespace {

namespace fs = std::filesystem;
using namespace taml::run;

// 0 ok, 1 run failure, 2 bad input.
constexpr int kFailed = 1;
constexpr int kBadInput = 2;

int cmd_run(const std::string& config, std::optional<std::uint64_t> seed) {
  const RunResult r = run_config_file(config, seed);
  std::cout << (r.ok ? "completed: " : "failed: ") << r.dir.string() << '\n';
  return r.ok ? 0 : kFailed;
}

int cmd_compare(const std::vector<std::string>& configs, const std::string& out) {
  std::vector<fs::path> paths(configs.begin(), configs.end());
  std::cout << compare(paths, out);
  return 0;
}

int cmd_curve(const std::string& run_dir, std::size_t max_steps, const std::string& init, const std::string& out) {
  const std::string csv = adaptation_curve(run_dir, max_steps, init == "random");
  if (out.empty()) {
    std::cout << csv;
  } else {
    write_file(out, csv);
  }
  return 0;
}

int cmd_measures(const std::string& input) {
  const std::string text = input == "-" ? std::string(std::istreambuf_iterator<char>(std::cin), {}) : read_file(input);
  std::cout << measures_json(read_loss_column(text)).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Task-agnostic meta-learning experiments"};
  app.require_subcommand(1);

  std::string config;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "Meta-train and meta-test one config");
  run->add_option("--config", config, "Config file (key = value lines)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the config seed");

  std::vector<std::string> configs;
  std::string out_dir;
  auto* cmp = app.add_subcommand("compare", "Run or reuse several configs and tabulate meta-test results");
  cmp->add_option("--configs", configs, "Comma-separated config files")->required()->delimiter(',')->check(
      CLI::ExistingFile);
  cmp->add_option("--out", out_dir, "Directory for comparison.txt and comparison.csv")->required();

  std::string run_dir, init = "trained", curve_out;
  std::size_t max_steps = 0;
  auto* curve = app.add_subcommand("curve", "Adaptation curve CSV of a completed run");
  curve->add_option("--run", run_dir, "Run output directory")->required()->check(CLI::ExistingDirectory);
  curve->add_option("--max-steps", max_steps, "Largest gradient step")->required();
  curve->add_option("--init", init, "Start from the trained checkpoint or the random initialization")
      ->check(CLI::IsMember({"trained", "random"}));
  curve->add_option("--out", curve_out, "Write CSV here instead of stdout");

  std::string input;
  auto* meas = app.add_subcommand("measures", "Inequality measures of a loss column as JSON");
  meas->add_option("--input", input, "CSV file, or - for stdin")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config, seed);
    if (*cmp) return cmd_compare(configs, out_dir);
    if (*curve) return cmd_curve(run_dir, max_steps, init, curve_out);
    if (*meas) return cmd_measures(input);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailed;
  }
  return kBadInput;
}
