#pragma once

#include "cedge/diffusion/denoiser.hpp"
#include "cedge/energy/bundle.hpp"
#include "cedge/experiments/persistence.hpp"
#include "cedge/rl/iql.hpp"

namespace cedge::experiments {

struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
};

Checkpoint denoiser_checkpoint(const diffusion::Denoiser& model, const diffusion::NoiseSchedule& schedule,
                               const env::Normalizer& normalizer, const Adam* optimizer, const Provenance& prov);

struct DiffusionArtifact {
  diffusion::Denoiser model;
  diffusion::NoiseSchedule schedule;
  env::Normalizer normalizer;
  std::string config_hash;
};
DiffusionArtifact restore_denoiser(const Checkpoint& ckpt);

// Energy bundle plus the reward annotator, trained together per target shift.
struct EnergyArtifact {
  energy::EnergyBundle bundle;
  energy::RewardAnnotator annotator;
  std::string config_hash;
};
Checkpoint energy_checkpoint(const EnergyArtifact& art, const Provenance& prov);
EnergyArtifact restore_energy(const Checkpoint& ckpt);

Checkpoint iql_checkpoint(const rl::IqlAgent& agent, const std::string& arm, const Provenance& prov);
rl::IqlAgent restore_iql(const Checkpoint& ckpt);

}  // namespace cedge::experiments
