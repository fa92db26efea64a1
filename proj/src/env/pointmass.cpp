#include "cedge/env/pointmass.hpp"

#include <cmath>
#include <numeric>

namespace cedge::env {

void EnvParams::validate() const {
  if (!(dt > 0.0)) throw ConfigError("env: dt must be positive");
  if (!(damping_factor() > 0.0))
    throw ConfigError("env: unstable damping, mu0 * kappa_fric * dt = " + std::to_string(mu0 * kappa_fric * dt) +
                      " must be < 1");
  if (noise_std < 0.0) throw ConfigError("env: noise_std must be non-negative");
  if (episode_len <= 0) throw ConfigError("env: episode_len must be positive");
  if (kappa_grav < 0.0 || kappa_fric < 0.0 || mu0 < 0.0 || g0 < 0.0 || u_max <= 0.0)
    throw ConfigError("env: scale parameters must be non-negative (u_max positive)");
}

State4 EnvState::vector() const {
  State4 s;
  s << position, velocity;
  return s;
}

EnvState EnvState::from_vector(const State4& s) {
  EnvState st;
  st.position = s.head<2>();
  st.velocity = s.tail<2>();
  return st;
}

Action2 clip_action(const Action2& a) { return a.cwiseMax(-1.0).cwiseMin(1.0); }

StepResult step(const EnvParams& params, const EnvState& state, const Action2& action, RngStream& rng) {
  const double damping = params.damping_factor();
  if (!(damping > 0.0)) throw ConfigError("env: unstable damping factor " + std::to_string(damping));
  const Action2 a = clip_action(action);
  Eigen::Vector2d accel = params.u_max * a;
  accel.y() -= params.gravity();
  StepResult out;
  out.state.velocity = state.velocity * damping + params.dt * accel;
  if (params.noise_std > 0.0) {
    const double n0 = rng.normal();
    const double n1 = rng.normal();
    out.state.velocity += params.noise_std * Eigen::Vector2d(n0, n1);
  }
  out.state.position = state.position + params.dt * out.state.velocity;
  out.reward = -(out.state.position - params.goal).norm();
  return out;
}

EnvState reset(RngStream& rng) {
  EnvState s;
  const double x = rng.uniform(-1.0, 1.0);
  const double y = rng.uniform(-1.0, 1.0);
  s.position = Eigen::Vector2d(x, y);
  return s;
}

BehaviorPolicy parse_policy(const std::string& name) {
  if (name == "random") return BehaviorPolicy::kRandom;
  if (name == "medium") return BehaviorPolicy::kMedium;
  if (name == "expert") return BehaviorPolicy::kExpert;
  throw ConfigError("unknown behavior policy '" + name + "' (expected random, medium or expert)");
}

std::string policy_name(BehaviorPolicy policy) {
  switch (policy) {
    case BehaviorPolicy::kRandom:
      return "random";
    case BehaviorPolicy::kMedium:
      return "medium";
    case BehaviorPolicy::kExpert:
      return "expert";
  }
  return "unknown";
}

namespace {

constexpr double kExpertKp = 4.0;
constexpr double kExpertDamping = 4.0;  // critical for kp = 4
constexpr double kMediumKp = 2.0;
constexpr double kMediumDamping = 1.5;
constexpr double kMediumNoise = 0.2;

Action2 pd_action(const EnvParams& params, const EnvState& state, double kp, double total_damping) {
  const double kd = std::max(0.0, total_damping - params.friction());
  Eigen::Vector2d accel = kp * (params.goal - state.position) - kd * state.velocity;
  accel.y() += params.gravity();
  return clip_action(accel / params.u_max);
}

}  // namespace

Action2 behavior_action(BehaviorPolicy policy, const EnvParams& params, const EnvState& state, RngStream& rng) {
  switch (policy) {
    case BehaviorPolicy::kRandom: {
      const double a0 = rng.uniform(-1.0, 1.0);
      const double a1 = rng.uniform(-1.0, 1.0);
      return Action2(a0, a1);
    }
    case BehaviorPolicy::kMedium: {
      Action2 a = pd_action(params, state, kMediumKp, kMediumDamping);
      const double n0 = rng.normal();
      const double n1 = rng.normal();
      return clip_action(a + kMediumNoise * Action2(n0, n1));
    }
    case BehaviorPolicy::kExpert:
      return pd_action(params, state, kExpertKp, kExpertDamping);
  }
  return Action2::Zero();
}

Controller behavior_controller(BehaviorPolicy policy, const EnvParams& params) {
  return [policy, params](const State4& s, int, RngStream& rng) {
    return behavior_action(policy, params, EnvState::from_vector(s), rng);
  };
}

EpisodeLog rollout(const EnvParams& params, const Controller& controller, std::uint64_t seed, int episode) {
  params.validate();
  RngStream env_rng(seed, 2 * static_cast<std::uint64_t>(episode));
  RngStream policy_rng(seed, 2 * static_cast<std::uint64_t>(episode) + 1);
  EpisodeLog log;
  EnvState state = reset(env_rng);
  for (int t = 0; t < params.episode_len; ++t) {
    const State4 s = state.vector();
    const Action2 a = clip_action(controller(s, t, policy_rng));
    StepResult next = step(params, state, a, env_rng);
    log.states.push_back(s);
    log.actions.push_back(a);
    log.rewards.push_back(next.reward);
    log.total_return += next.reward;
    state = next.state;
  }
  return log;
}

ScoreAnchors compute_anchors(const EnvParams& params, int episodes, std::uint64_t seed) {
  if (episodes <= 0) throw ConfigError("anchors: episodes must be positive");
  ScoreAnchors anchors;
  const Controller random = behavior_controller(BehaviorPolicy::kRandom, params);
  const Controller expert = behavior_controller(BehaviorPolicy::kExpert, params);
  for (int e = 0; e < episodes; ++e) {
    anchors.random_return += rollout(params, random, seed, e).total_return;
    anchors.expert_return += rollout(params, expert, seed, e).total_return;
  }
  anchors.random_return /= episodes;
  anchors.expert_return /= episodes;
  return anchors;
}

double normalized_score(double J, double J_random, double J_expert) {
  if (J_expert == J_random || !std::isfinite(J_expert - J_random))
    throw ConfigError("normalized_score: degenerate anchors (expert == random)");
  return (J - J_random) / (J_expert - J_random) * 100.0;
}

ScoreStats evaluate_controller(const EnvParams& params, const Controller& controller, const ScoreAnchors& anchors,
                               int episodes, const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty() || episodes <= 0) throw ConfigError("evaluation needs at least one seed and one episode");
  ScoreStats stats;
  stats.seeds = seeds;
  for (std::uint64_t seed : seeds) {
    std::vector<double> returns, scores;
    for (int e = 0; e < episodes; ++e) {
      const double J = rollout(params, controller, seed, e).total_return;
      returns.push_back(J);
      scores.push_back(normalized_score(J, anchors.random_return, anchors.expert_return));
    }
    stats.per_seed_mean.push_back(std::accumulate(scores.begin(), scores.end(), 0.0) / episodes);
    stats.raw_returns.push_back(std::move(returns));
    stats.scores.push_back(std::move(scores));
  }
  const double n = static_cast<double>(seeds.size());
  stats.mean = std::accumulate(stats.per_seed_mean.begin(), stats.per_seed_mean.end(), 0.0) / n;
  double var = 0.0;
  for (double m : stats.per_seed_mean) var += (m - stats.mean) * (m - stats.mean);
  stats.std = std::sqrt(var / n);
  return stats;
}

}  // namespace cedge::env
