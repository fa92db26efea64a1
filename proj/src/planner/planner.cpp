#include "cedge/planner/planner.hpp"

#include <cmath>

namespace cedge::planner {

void PlannerConfig::validate() const {
  if (candidates < 1) throw ConfigError("planner: candidates must be >= 1");
  if (!(action_low < action_high)) throw ConfigError("planner: action bounds need low < high");
  if (episodes < 1) throw ConfigError("planner: episodes must be >= 1");
  weights.validate();
}

Index select_candidate(const Vector& energies) {
  if (energies.size() == 0) throw UsageError("select_candidate: no candidates");
  Index best = 0;
  for (Index i = 0; i < energies.size(); ++i) {
    if (!std::isfinite(energies(i))) throw NumericError("candidate " + std::to_string(i) + " has non-finite energy");
    if (energies(i) < energies(best)) best = i;
  }
  return best;
}

PlanResult plan(const PlannerModels& models, const PlannerConfig& config, const env::State4& s_cur,
                std::uint64_t seed) {
  config.validate();
  if (!s_cur.allFinite()) throw ConfigError("planner: current state is not finite");
  const auto& bundle = models.bundle;
  if (!bundle.ret.trained) throw ConfigError("planner: return predictor is not trained");

  sampler::SamplerConfig sc = config.sampler;
  sc.num_samples = config.candidates;
  sc.seed = seed;
  const Vector s_norm = bundle.normalizer.normalize(s_cur);
  const auto denoise = sampler::ema_denoiser(models.denoiser);
  const auto guidance = sampler::energy_guidance(bundle, config.weights);

  PlanResult out;
  out.candidates = sampler::sample_trajectories(models.schedule, denoise, guidance, sc,
                                                models.denoiser.arch().width(), {s_norm});
  out.return_energy = -bundle.ret.predict(out.candidates);
  out.selected = select_candidate(out.return_energy);
  const Index ds = bundle.state_dim();
  const env::Action2 first = out.candidates.row(out.selected).segment(ds, env::kActionDim).transpose();
  out.action = first.cwiseMax(config.action_low).cwiseMin(config.action_high);
  return out;
}

env::Action2 plan_action(const PlannerModels& models, const PlannerConfig& config, const env::State4& s_cur,
                         RngStream& rng) {
  return plan(models, config, s_cur, rng.next_u64()).action;
}

env::Controller planner_controller(const PlannerModels& models, const PlannerConfig& config) {
  config.validate();
  return [models, config](const env::State4& s, int, RngStream& rng) { return plan_action(models, config, s, rng); };
}

env::EpisodeLog run_planner_episode(const env::EnvParams& params, const PlannerModels& models,
                                    const PlannerConfig& config, std::uint64_t seed, int episode) {
  return env::rollout(params, planner_controller(models, config), seed, episode);
}

env::ScoreStats evaluate_planner(const env::EnvParams& params, const PlannerModels& models,
                                 const PlannerConfig& config, const env::ScoreAnchors& anchors,
                                 const std::vector<std::uint64_t>& seeds) {
  return env::evaluate_controller(params, planner_controller(models, config), anchors, config.episodes, seeds);
}

}  // namespace cedge::planner
