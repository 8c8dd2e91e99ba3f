#include <exception>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "kflock/scenario.hpp"

namespace {

// A config that carries a [study] section runs the level ladder; anything
// else marches once and reports where the snapshots went.
int execute(const kflock::ScenarioConfig& cfg, const std::string& out_dir) {
  if (cfg.study) {
    const kflock::RateTable table = kflock::run_convergence(cfg, out_dir);
    std::cout << kflock::format_rate_table(table);
    return 0;
  }
  const kflock::RunResult result = kflock::run_scenario(cfg, out_dir);
  const kflock::DiagnosticsRecord& last = result.records.back();
  std::cout << "wrote " << result.out_dir.string() << " ("
            << result.records.size()
            << " snapshots, final t = " << kflock::shortest_repr(last.time)
            << ", mass = " << kflock::shortest_repr(last.mass)
            << ", S = " << kflock::shortest_repr(last.x_width)
            << ", V = " << kflock::shortest_repr(last.v_width)
            << ", clusters = " << last.clusters << ")\n";
  return 0;
}

std::string preset_listing() {
  std::string text = "one of:";
  for (const std::string& name : kflock::preset_names()) text += " " + name;
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"positivity-preserving DG solver for kinetic alignment models"};
  app.require_subcommand(1);

  std::string run_path, rates_path, preset_name, out_dir;
  bool emit_config = false;

  CLI::App* run = app.add_subcommand("run", "run a scenario from a config file");
  run->add_option("config", run_path, "path to the config file")->required();
  run->add_option("--out-dir", out_dir, "override the output directory");

  CLI::App* preset_cmd =
      app.add_subcommand("preset", "run (or print) a built-in scenario");
  preset_cmd->add_option("name", preset_name, preset_listing())->required();
  preset_cmd->add_flag("--emit-config", emit_config,
                       "print the resolved config instead of running");
  preset_cmd->add_option("--out-dir", out_dir, "override the output directory");

  CLI::App* rates = app.add_subcommand(
      "rates", "run the convergence study described by a config file");
  rates->add_option("config", rates_path, "path to the config file")->required();
  rates->add_option("--out-dir", out_dir, "override the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (run->parsed()) return execute(kflock::load_config(run_path), out_dir);
    if (preset_cmd->parsed()) {
      const kflock::ScenarioConfig cfg = kflock::preset(preset_name);
      if (emit_config) {
        std::cout << kflock::resolved_config_text(cfg);
        return 0;
      }
      return execute(cfg, out_dir);
    }
    const kflock::ScenarioConfig cfg = kflock::load_config(rates_path);
    if (!cfg.study)
      throw kflock::ConfigError(
          "config has no [study] section; use the run command");
    std::cout << kflock::format_rate_table(kflock::run_convergence(cfg, out_dir));
    return 0;
  } catch (const kflock::StabilityError& e) {
    std::cerr << "stability error: " << e.what() << '\n';
    return 3;
  } catch (const kflock::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
