#include "cedge/experiments/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace cedge::experiments;
  const std::string program = "cedge";
  if (argc < 2) {
    std::cerr << usage(program);
    return 2;
  }
  const std::string name = argv[1];
  if (name == "-h" || name == "--help") {
    std::cout << usage(program);
    return 0;
  }
  const auto& names = subcommand_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    std::cerr << "unknown subcommand '" << name << "'\n" << usage(program);
    return 2;
  }

  CLI::App app{"cedge " + name, program + " " + name};
  CommandOptions options;
  std::uint64_t seed = 0;
  std::string out;
  app.add_option("--config", options.config_path, "experiment config (JSON)")->required();
  auto* seed_opt = app.add_option("--seed", seed, "run seed");
  auto* out_opt = app.add_option("--out", out, "output directory");
  app.add_option("--set", options.overrides, "override a config key: key=value")->take_all();
  try {
    app.parse(argc - 1, argv + 1);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  if (*seed_opt) options.seed = seed;
  if (*out_opt) options.out = out;
  return run_subcommand(name, options, std::cout, std::cerr, program);
}
