#pragma once

#include "cedge/sampler/guided_sampler.hpp"

#include <string>

namespace cedge::synth {

struct GenerationModels {
  const diffusion::Denoiser& denoiser;
  const diffusion::NoiseSchedule& schedule;
  const energy::EnergyBundle& bundle;
};

// Generated segments with per-segment energies and, once annotated,
// per-transition rewards (M x (H - 1)).
struct SyntheticSet {
  env::SegmentSet segments;
  Vector domain_energy;  // E₁
  Vector return_energy;  // E₂
  Matrix rewards;
  std::vector<Index> source_index;  // position in the generated set
  std::uint64_t seed = 0;
  std::string config_hash;

  Index size() const { return segments.size(); }
  SyntheticSet subset(const std::vector<Index>& rows) const;
};

struct FilterConfig {
  double domain_ratio = 0.1;  // p₁
  double return_ratio = 0.5;  // p₂

  void validate() const;
};

// ⌈budget / (H - 1)⌉ unconditioned guided segments.
Index segments_for_budget(long budget, Index horizon);
env::SegmentSet generate_synthetic(const GenerationModels& models, const sampler::SamplerConfig& sampler,
                                   const energy::GuidanceWeights& weights, long budget, std::uint64_t seed);

// r = r̂(s_t, a_t, s_{t+1}) for each consecutive row pair, normalized states.
Matrix annotate_rewards(const energy::RewardAnnotator& annotator, const env::SegmentSet& segments);

// E₁ and E₂ on the clean segments.
SyntheticSet score_segments(const energy::EnergyBundle& bundle, env::SegmentSet segments);

// Keep count: max(1, ⌊p · M⌋) for M > 0.
Index keep_count(double ratio, Index m);
// Two-stage order-statistic filter; returned indices ascend.
std::vector<Index> filter_indices(const Vector& domain_energy, const Vector& return_energy,
                                  const FilterConfig& config);
SyntheticSet filter_trajectories(const SyntheticSet& set, const FilterConfig& config);

struct TrainingBuffers {
  env::OfflineDataset synthetic{env::Domain::kTarget};
  env::OfflineDataset target{env::Domain::kTarget};
};

// Annotates the retained segments and unpacks them into transitions with
// denormalized states, actions clipped to [-1, 1] and done = false. Each
// segment becomes one episode numbered by its position in `retained`.
TrainingBuffers assemble_training_set(const SyntheticSet& retained, const energy::RewardAnnotator& annotator,
                                      const env::Normalizer& normalizer, const env::OfflineDataset& target);

}  // namespace cedge::synth
