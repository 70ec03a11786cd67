#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "safenvelope/errors.hpp"
#include "safenvelope/scenarios.hpp"

int main(int argc, char** argv) {
  CLI::App app{"safe-set and safe-controller synthesis from data"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_given = false;

  const std::vector<std::string> commands = {"shape",      "bound-lipschitz", "bound-gp",
                                             "synthesize", "verify",          "simulate",
                                             "explore",    "baseline-robust"};
  for (const auto& name : commands) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "scenario config JSON")->required();
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "override the config seed")->each([&](const std::string&) {
      seed_given = true;
    });
  }

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    safenv::ScenarioConfig cfg = safenv::load_scenario(config_path);
    if (seed_given) cfg.seed = seed;
    return safenv::run_scenario(cfg, command, out_dir);
  } catch (const safenv::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
