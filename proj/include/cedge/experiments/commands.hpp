#pragma once

#include "cedge/experiments/config.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cedge::experiments {

class MissingArtifact : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

const std::vector<std::string>& subcommand_names();
std::string usage(const std::string& program);

// Artifact layout of one seed of one run:
//   <out>/seed-<s>/data/source.csv
//   <out>/seed-<s>/checkpoints/diffusion.json
//   <out>/seed-<s>/shifts/<shift>/{data,checkpoints,synthetic,metrics}/...
struct RunPaths {
  std::filesystem::path run;
  std::filesystem::path root;
  std::filesystem::path shift;

  explicit RunPaths(const ExperimentConfig& config);

  std::filesystem::path source_data() const { return root / "data" / "source.csv"; }
  std::filesystem::path diffusion() const { return root / "checkpoints" / "diffusion.json"; }
  std::filesystem::path root_metrics(const std::string& name) const { return root / "metrics" / (name + ".jsonl"); }
  std::filesystem::path timings() const { return root / "timings.jsonl"; }
  std::filesystem::path target_data() const { return shift / "data" / "target.csv"; }
  std::filesystem::path union_diffusion() const { return shift / "checkpoints" / "diffusion-union.json"; }
  std::filesystem::path energy() const { return shift / "checkpoints" / "energy.json"; }
  std::filesystem::path policy(const std::string& arm) const { return shift / "checkpoints" / (arm + ".json"); }
  std::filesystem::path generated() const { return shift / "synthetic" / "generated.json"; }
  std::filesystem::path synthetic_data() const { return shift / "synthetic" / "d_syn.csv"; }
  std::filesystem::path metrics(const std::string& name) const { return shift / "metrics" / (name + ".jsonl"); }
};

// Sidecar next to a CSV dataset: "source.csv" -> "source.meta.json".
std::filesystem::path sidecar_path(const std::filesystem::path& csv);

struct CommandOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> overrides;
};

ExperimentConfig resolve_config(const CommandOptions& options);

// Runs one phase; throws on any failure (MissingArtifact for absent inputs,
// ConfigError for invalid configuration, UsageError for unknown names).
void execute_subcommand(const std::string& name, const ExperimentConfig& config, std::ostream& log);

// 0 on success, 2 for an unknown subcommand (after printing usage), 1 for
// any other error (message on `err`).
int run_subcommand(const std::string& name, const CommandOptions& options, std::ostream& out, std::ostream& err,
                   const std::string& program = "cedge");

}  // namespace cedge::experiments
