#pragma once

#include "cedge/env/pointmass.hpp"
#include "cedge/sampler/guided_sampler.hpp"

namespace cedge::planner {

struct PlannerModels {
  const diffusion::Denoiser& denoiser;
  const diffusion::NoiseSchedule& schedule;
  const energy::EnergyBundle& bundle;
};

struct PlannerConfig {
  int candidates = 64;
  sampler::SamplerConfig sampler;  // temperature 0.5
  energy::GuidanceWeights weights;
  double action_low = -1.0;
  double action_high = 1.0;
  int episodes = 10;

  void validate() const;
};

struct PlanResult {
  env::Action2 action = env::Action2::Zero();
  Index selected = 0;
  Vector return_energy;  // E₂ per candidate
  Matrix candidates;     // (N x H·D) normalized segments
};

// argmin over finite values, ties to the lowest index.
Index select_candidate(const Vector& energies);

// Samples `candidates` segments conditioned on the normalized s_cur, picks the
// lowest-E₂ one and returns its first action clipped to the bounds. The
// sampler master seed is `seed`.
PlanResult plan(const PlannerModels& models, const PlannerConfig& config, const env::State4& s_cur,
                std::uint64_t seed);
env::Action2 plan_action(const PlannerModels& models, const PlannerConfig& config, const env::State4& s_cur,
                         RngStream& rng);

// Replans at every step; sampler seeds are drawn from the episode's
// controller stream.
env::Controller planner_controller(const PlannerModels& models, const PlannerConfig& config);

env::EpisodeLog run_planner_episode(const env::EnvParams& params, const PlannerModels& models,
                                    const PlannerConfig& config, std::uint64_t seed, int episode = 0);

env::ScoreStats evaluate_planner(const env::EnvParams& params, const PlannerModels& models,
                                 const PlannerConfig& config, const env::ScoreAnchors& anchors,
                                 const std::vector<std::uint64_t>& seeds);

}  // namespace cedge::planner
