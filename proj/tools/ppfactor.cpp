// Command-line front end: `ppfactor run` and `ppfactor simulate`.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ppfactor/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

int finish(const ppfactor::RunArtifacts& art) {
  std::cout << "report: " << art.report_json.string() << "\n"
            << "table:  " << art.table_csv.string() << "\n"
            << "trace:  " << art.trace_csv.string() << "\n"
            << "log:    " << art.log.string() << "\n";
  if (art.pursuit_failed) {
    std::cerr << "numerical abort: " << art.failure << "\n";
    return kExitNumerical;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Projection-pursuit density factorization"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  auto* run = app.add_subcommand("run", "Run an experiment described by a JSON config file");
  run->add_option("--config", config_path, "Path to the JSON config")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--out", out_dir, "Override the output directory");

  std::string preset;
  std::string method;
  bool print_config = false;
  auto* sim = app.add_subcommand("simulate", "Run one of the built-in simulations");
  sim->add_option("--preset", preset, "Simulation preset")->required()->check(CLI::IsMember({"sim1", "sim2", "sim3"}));
  sim->add_option("--seed", seed, "Seed");
  sim->add_option("--out", out_dir, "Output directory");
  sim->add_option("--method", method, "ours, huber or both")->check(CLI::IsMember({"ours", "huber", "both"}));
  sim->add_flag("--print-config", print_config, "Print the preset config and exit");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    ppfactor::ExperimentConfig cfg;
    if (*run) {
      cfg = ppfactor::parse_config_file(config_path);
    } else {
      ppfactor::Json doc = ppfactor::preset_config(preset);
      if (!method.empty()) doc["method"] = method;
      if (print_config) {
        std::cout << doc.dump(2) << "\n";
        return 0;
      }
      cfg = ppfactor::parse_config(doc);
    }
    if (seed) {
      cfg.pursuit.seed = *seed;
      cfg.echo["seed"] = *seed;
    }
    if (!out_dir.empty()) {
      cfg.output_dir = out_dir;
      cfg.echo["output_dir"] = out_dir;
    }
    return finish(ppfactor::run_experiment(cfg));
  } catch (const ppfactor::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ppfactor::NumericalError& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
