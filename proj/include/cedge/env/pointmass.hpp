#pragma once

#include "cedge/core/rng.hpp"
#include "cedge/core/tensor.hpp"

#include <Eigen/Core>

#include <functional>
#include <string>
#include <vector>

namespace cedge::env {

inline constexpr Index kStateDim = 4;
inline constexpr Index kActionDim = 2;

using State4 = Eigen::Matrix<double, kStateDim, 1>;
using Action2 = Eigen::Vector2d;

// 2-D stochastic point mass with linear damping (friction analog) and a
// constant downward acceleration (gravity analog).
struct EnvParams {
  double kappa_grav = 1.0;
  double kappa_fric = 1.0;
  double dt = 0.1;
  double g0 = 1.0;
  double mu0 = 1.5;
  double u_max = 4.0;
  double noise_std = 0.05;
  Eigen::Vector2d goal = Eigen::Vector2d::Zero();
  int episode_len = 50;

  double damping_factor() const { return 1.0 - mu0 * kappa_fric * dt; }
  double gravity() const { return kappa_grav * g0; }
  double friction() const { return mu0 * kappa_fric; }
  // Throws ConfigError when the parameters violate stability or sign rules.
  void validate() const;
};

struct EnvState {
  Eigen::Vector2d position = Eigen::Vector2d::Zero();
  Eigen::Vector2d velocity = Eigen::Vector2d::Zero();

  State4 vector() const;
  static EnvState from_vector(const State4& s);
};

struct StepResult {
  EnvState state;
  double reward = 0.0;
};

// v' = v (1 - mu0 kf dt) + dt (u_max a - kg g0 e_y) + noise_std ξ
// x' = x + dt v'
// r  = -|x' - goal|
StepResult step(const EnvParams& params, const EnvState& state, const Action2& action, RngStream& rng);

// Position uniform in [-1, 1]^2, zero velocity; shared by every domain.
EnvState reset(RngStream& rng);

Action2 clip_action(const Action2& a);

enum class BehaviorPolicy { kRandom, kMedium, kExpert };

BehaviorPolicy parse_policy(const std::string& name);
std::string policy_name(BehaviorPolicy policy);

// PD controllers with gravity feed-forward for the environment they act in.
// The expert is critically damped against the env's own friction; the medium
// policy uses softer gains, relies on env friction for damping, and adds
// Gaussian action noise.
Action2 behavior_action(BehaviorPolicy policy, const EnvParams& params, const EnvState& state, RngStream& rng);

// A controller maps (raw state, step index, rng) to an action.
using Controller = std::function<Action2(const State4&, int, RngStream&)>;

Controller behavior_controller(BehaviorPolicy policy, const EnvParams& params);

struct EpisodeLog {
  double total_return = 0.0;
  std::vector<State4> states;
  std::vector<Action2> actions;
  std::vector<double> rewards;
};

// One episode with env noise from stream (seed, 2e) and controller noise from
// stream (seed, 2e + 1).
EpisodeLog rollout(const EnvParams& params, const Controller& controller, std::uint64_t seed, int episode);

struct ScoreAnchors {
  double random_return = 0.0;
  double expert_return = 0.0;
};

// Mean returns of the random and expert policies over `episodes` episodes.
ScoreAnchors compute_anchors(const EnvParams& params, int episodes, std::uint64_t seed);

// 100 (J - J_random) / (J_expert - J_random)
double normalized_score(double J, double J_random, double J_expert);

struct ScoreStats {
  std::vector<std::uint64_t> seeds;
  std::vector<double> per_seed_mean;
  std::vector<std::vector<double>> raw_returns;
  std::vector<std::vector<double>> scores;
  double mean = 0.0;
  double std = 0.0;  // population std over per-seed means
};

// Runs `episodes` episodes per seed and aggregates normalized scores.
ScoreStats evaluate_controller(const EnvParams& params, const Controller& controller, const ScoreAnchors& anchors,
                               int episodes, const std::vector<std::uint64_t>& seeds);

}  // namespace cedge::env
