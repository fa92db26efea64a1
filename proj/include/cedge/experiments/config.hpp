#pragma once

#include "cedge/diffusion/denoiser.hpp"
#include "cedge/energy/bundle.hpp"
#include "cedge/env/pointmass.hpp"
#include "cedge/planner/planner.hpp"
#include "cedge/rl/iql.hpp"
#include "cedge/synth/pipeline.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace cedge::experiments {

using json = nlohmann::json;

// Every recognised key with its default value. User documents are merged
// onto this; keys absent here are rejected.
const json& default_config();

struct ShiftSpec {
  std::string type;  // "gravity", "friction" or "none"
  double level = 1.0;
  std::string name() const;  // e.g. "gravity-2"
};

class ExperimentConfig {
 public:
  ExperimentConfig();
  // Merges `doc` onto the defaults, then validates.
  explicit ExperimentConfig(const json& doc);

  static ExperimentConfig load(const std::string& path, const std::vector<std::string>& overrides = {});

  // `key=value` with a dotted key; the value is parsed as JSON when possible,
  // otherwise taken as a string.
  void set(const std::string& assignment);
  void set(const std::string& key, const json& value);

  const json& doc() const { return doc_; }
  // SHA-256 of the canonical serialization, lowercase hex.
  std::string hash() const;

  std::uint64_t seed() const;
  std::string output_dir() const;

  env::EnvParams source_env() const;
  env::EnvParams target_env() const;
  ShiftSpec shift() const;

  env::BehaviorPolicy source_policy() const;
  env::BehaviorPolicy target_policy() const;
  long source_size() const;
  long target_size() const;

  diffusion::DenoiserArch denoiser_arch() const;
  int diffusion_steps() const;
  diffusion::DiffusionTrainConfig diffusion_train(std::uint64_t seed) const;
  std::string diffusion_dataset() const;  // "source" or "union"

  energy::TrainConfig energy_train(std::uint64_t seed) const;
  energy::ReturnArch return_arch() const;
  Index return_channels() const;
  double energy_gamma() const;
  energy::GuidanceWeights guidance_weights() const;
  std::vector<energy::GuidanceWeights> guidance_sweep() const;
  double dara_eta() const;

  sampler::SamplerConfig sampler(int steps) const;
  planner::PlannerConfig planner(int steps) const;
  std::vector<std::string> planner_arms() const;
  std::string baseline_denoiser() const;

  long generation_budget() const;
  double generation_temperature() const;
  synth::FilterConfig filter() const;

  rl::IqlConfig iql(std::uint64_t seed) const;
  std::vector<std::string> iql_arms() const;

  int eval_episodes() const;
  int anchor_episodes() const;

 private:
  void validate() const;
  const json& at(const std::string& dotted) const;

  json doc_;
};

// Canonical text used for hashing and for config snapshots.
std::string canonical_dump(const json& doc);

std::string sha256_hex(const std::string& data);

}  // namespace cedge::experiments
