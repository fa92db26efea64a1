#include "acceptance.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <exception>
#include <iostream>
#include <set>

using namespace cedge::acceptance;

int main(int argc, char** argv) {
  CLI::App app{"Runs the acceptance criteria and prints one PASS/FAIL line each."};
  std::vector<int> only;
  PipelineOptions pipeline;
  pipeline.workdir = "acceptance-runs";
  app.add_option("--only", only, "criterion ids to run (default: all)")->delimiter(',');
  app.add_option("--cli", pipeline.cli, "cedge executable (needed for criteria 8-10)");
  app.add_option("--workdir", pipeline.workdir, "scratch directory for pipeline runs");
  app.add_option("--desk-config", pipeline.desk_config, "config for criteria 8 and 9");
  app.add_option("--smoke-config", pipeline.smoke_config, "config for criterion 10");
  app.add_option("--seeds", pipeline.seeds, "seeds for criteria 8 and 9")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::set<int> wanted(only.begin(), only.end());
  auto criteria = property_criteria();
  for (auto& c : pipeline_criteria(pipeline)) criteria.push_back(std::move(c));

  int failed = 0, ran = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    if (c.id >= 8 && (pipeline.cli.empty() || (c.id < 10 ? pipeline.desk_config : pipeline.smoke_config).empty())) {
      std::cerr << fmt::format("criterion {} needs --cli and its config\n", c.id);
      return 2;
    }
    ++ran;
    std::cerr << fmt::format("running criterion {} ({})\n", c.id, c.name);
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << fmt::format("criterion {:>2} {}: {} | {}", c.id, o.pass ? "PASS" : "FAIL", c.name, o.detail)
              << std::endl;
  }
  std::cout << fmt::format("{} of {} criteria passed", ran - failed, ran) << std::endl;
  return failed == 0 ? 0 : 1;
}
