#pragma once

#include "cedge/core/nn.hpp"
#include "cedge/core/params.hpp"
#include "cedge/env/dataset.hpp"

#include <functional>
#include <limits>
#include <vector>

namespace cedge::rl {

struct IqlConfig {
  double expectile = 0.7;
  double beta = 3.0;  // advantage temperature
  double gamma = 0.99;
  double polyak = 0.005;
  double lr = 3e-4;
  double weight_clip = 100.0;
  Index batch_per_buffer = 128;
  Index hidden = 256;
  long steps = 100000;
  // Dataset done flags mark time limits in the fixed-horizon env, so by
  // default they do not stop bootstrapping.
  bool timeout_terminal = false;
  long eval_every = 0;
  long checkpoint_every = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

// mean(|τ - 1{u < 0}| u²)
double expectile_loss(const Vector& u, double tau);
ad::Var expectile_loss(ad::Tape& tape, ad::Var u, double tau);

// min(exp(β · adv), clip), elementwise.
Vector advantage_weights(const Vector& advantage, double beta, double clip);

// Dataset actions are clipped to ±kActionSquashLimit before atanh.
inline constexpr double kActionSquashLimit = 0.999;

// V, twin Q with polyak targets, and a tanh-squashed Gaussian policy whose
// state-independent log-std is clamped to [-20, 2]. Networks consume
// normalized states and raw actions.
class IqlAgent {
 public:
  static constexpr double kLogStdMin = -20.0;
  static constexpr double kLogStdMax = 2.0;

  IqlAgent() = default;
  IqlAgent(Index state_dim, Index action_dim, Index hidden, env::Normalizer normalizer, std::uint64_t seed);

  ad::Var value(ad::Tape& tape, const ParameterStore& store, ad::Var s) const;
  // which = 0 or 1.
  ad::Var q(ad::Tape& tape, const ParameterStore& store, int which, ad::Var s, ad::Var a) const;
  // log π(a|s) for squashed actions a in (-1, 1).
  ad::Var policy_log_prob(ad::Tape& tape, const ParameterStore& store, ad::Var s, const Matrix& a) const;

  Vector value(const Matrix& s) const;
  Vector q_min(const ParameterStore& store, const Matrix& s, const Matrix& a) const;
  Vector policy_log_prob(const Matrix& s, const Matrix& a) const;
  // tanh(mean(normalized s)).
  env::Action2 act(const env::State4& raw_state) const;
  Matrix act_normalized(const Matrix& s) const;

  void clamp_log_std();
  void update_targets(double polyak);

  Index state_dim() const { return state_dim_; }
  Index action_dim() const { return action_dim_; }
  Index hidden() const { return hidden_; }
  const env::Normalizer& normalizer() const { return normalizer_; }

  ParameterStore value_params;
  ParameterStore q_params;
  ParameterStore q_target;
  ParameterStore policy_params;
  Adam value_opt;
  Adam q_opt;
  Adam policy_opt;

 private:
  Index state_dim_ = 0;
  Index action_dim_ = 0;
  Index hidden_ = 0;
  env::Normalizer normalizer_;
  Mlp value_net_;
  Mlp q_net_[2];
  Mlp policy_net_;
};

struct IqlRecord {
  long step = 0;
  double value_loss = 0.0;
  double q_loss = 0.0;
  double policy_loss = 0.0;
  double eval_score = std::numeric_limits<double>::quiet_NaN();
};

// One update on a batch with normalized states: expectile value regression
// toward min target-Q, twin-Q regression to r + γ(1 - done)V(s'), advantage-
// weighted log-likelihood for the policy, then polyak target update. Throws
// NumericError (before any parameter changes for that network) on non-finite
// losses.
IqlRecord iql_update_step(IqlAgent& agent, const env::TransitionBatch& batch, const IqlConfig& config);

struct IqlHooks {
  std::function<double(const IqlAgent&)> evaluate;                   // called every eval_every steps
  std::function<void(long step, const IqlAgent&)> checkpoint;        // every checkpoint_every steps
  std::function<void(const IqlRecord&)> record;                      // every step
};

// Each step draws batch_per_buffer transitions from every non-empty buffer
// and concatenates them. The state normalizer is fit on the union.
IqlAgent train_iql(const env::OfflineDataset& synthetic, const env::OfflineDataset& target, const IqlConfig& config,
                   std::vector<IqlRecord>* history = nullptr, const IqlHooks& hooks = {});

env::Controller policy_controller(const IqlAgent& agent);
env::ScoreStats evaluate_policy(const env::EnvParams& params, const IqlAgent& agent, const env::ScoreAnchors& anchors,
                                int episodes, const std::vector<std::uint64_t>& seeds);

}  // namespace cedge::rl
