#pragma once

#include "cedge/core/nn.hpp"
#include "cedge/core/params.hpp"
#include "cedge/env/dataset.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cedge::energy {

struct TrainConfig {
  long steps = 20000;
  Index batch = 64;
  Index hidden = 256;
  AdamConfig adam{2e-4, 0.9, 0.999, 1e-8, 1e-4};
  std::uint64_t seed = 0;
};

// Two-hidden-layer MLP emitting the target-class logit z:
// log p(trg | x) = log σ(z), log p(src | x) = log σ(-z).
class BinaryClassifier {
 public:
  BinaryClassifier() = default;
  BinaryClassifier(std::string prefix, Index in_dim, Index hidden, std::uint64_t seed);

  ad::Var logit(ad::Tape& tape, ad::Var x) const { return net_.apply(tape, params_, x); }
  Vector logits(const Matrix& x) const;

  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const Mlp& net() const { return net_; }

 private:
  Mlp net_;
  ParameterStore params_;
};

// Cross-entropy -E_src[log p(src|x)] - E_trg[log p(trg|x)] with balanced
// minibatches of `batch` source + `batch` target rows per step.
void train_binary_classifier(BinaryClassifier& clf, const Matrix& source, const Matrix& target,
                             const TrainConfig& config, std::vector<double>* losses = nullptr);

double classifier_loss(const BinaryClassifier& clf, const Matrix& source, const Matrix& target);

// p(trg | s, a, s') and p(trg | s, a) over normalized states and raw actions.
struct DomainClassifierPair {
  Index state_dim = env::kStateDim;
  Index action_dim = env::kActionDim;
  BinaryClassifier sas;
  BinaryClassifier sa;
  bool trained = false;

  DomainClassifierPair() = default;
  DomainClassifierPair(Index state_dim, Index action_dim, Index hidden, std::uint64_t seed);

  // Source-over-target dynamics log-ratio per row:
  // [log p(src|s,a,s') - log p(trg|s,a,s')] - [log p(src|s,a) - log p(trg|s,a)].
  Vector log_ratio(const Matrix& s, const Matrix& a, const Matrix& s_next) const;
};

Matrix sas_features(const Matrix& s, const Matrix& a, const Matrix& s_next);
Matrix sa_features(const Matrix& s, const Matrix& a);

DomainClassifierPair train_domain_classifiers(const env::TransitionBatch& source, const env::TransitionBatch& target,
                                              const TrainConfig& config, std::vector<double>* losses = nullptr);

enum class ReturnArch { kConv, kDense };
ReturnArch parse_return_arch(const std::string& name);
std::string return_arch_name(ReturnArch arch);

// J_ψ(τ): temporal conv encoder (kernel 3) + mean pool over time + linear
// head, or a dense MLP on the flattened segment.
class ReturnPredictor {
 public:
  ReturnPredictor() = default;
  ReturnPredictor(ReturnArch arch, Index horizon, Index transition_dim, Index hidden, Index channels, double gamma,
                  std::uint64_t seed);

  ad::Var apply(ad::Tape& tape, const ParameterStore& store, ad::Var tau) const;
  ad::Var apply(ad::Tape& tape, ad::Var tau) const { return apply(tape, params_, tau); }
  Vector predict(const Matrix& tau) const;

  ReturnArch arch() const { return arch_; }
  Index horizon() const { return horizon_; }
  Index transition_dim() const { return transition_dim_; }
  Index hidden() const { return hidden_; }
  Index channels() const { return channels_; }
  double gamma() const { return gamma_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  bool trained = false;

 private:
  ReturnArch arch_ = ReturnArch::kConv;
  Index horizon_ = 0;
  Index transition_dim_ = 0;
  Index hidden_ = 0;
  Index channels_ = 0;
  double gamma_ = 0.99;
  ConvStack encoder_;
  Mlp head_;
  ParameterStore params_;
};

// Squared error against Σ_{t<H} γ^t r_t; output bias starts at the mean target.
void train_return_predictor(ReturnPredictor& model, const env::SegmentSet& segments, const TrainConfig& config,
                            std::vector<double>* losses = nullptr);

// π_ω(a | s) = N(mean(s), diag(exp(2 log_std))), log_std state-independent and
// clamped to [-5, 2].
class BehaviorPolicyModel {
 public:
  static constexpr double kLogStdMin = -5.0;
  static constexpr double kLogStdMax = 2.0;

  BehaviorPolicyModel() = default;
  BehaviorPolicyModel(Index state_dim, Index action_dim, Index hidden, std::uint64_t seed);

  // (N x 1) log-densities.
  ad::Var log_prob(ad::Tape& tape, const ParameterStore& store, ad::Var s, ad::Var a) const;
  ad::Var log_prob(ad::Tape& tape, ad::Var s, ad::Var a) const { return log_prob(tape, params_, s, a); }
  Vector log_prob(const Matrix& s, const Matrix& a) const;
  Matrix mean(const Matrix& s) const;
  RowVector log_std() const { return params_.at("policy.log_std"); }
  void clamp_log_std();

  Index state_dim() const { return state_dim_; }
  Index action_dim() const { return action_dim_; }
  Index hidden() const { return hidden_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  bool trained = false;

 private:
  Index state_dim_ = 0;
  Index action_dim_ = 0;
  Index hidden_ = 0;
  Mlp mean_net_;
  ParameterStore params_;
};

// Minimizes -E[log π_ω(a|s)] on (normalized) source state-action pairs.
void train_behavior_policy(BehaviorPolicyModel& model, const Matrix& states, const Matrix& actions,
                           const TrainConfig& config, std::vector<double>* losses = nullptr);

double behavior_nll(const BehaviorPolicyModel& model, const Matrix& states, const Matrix& actions);

// r̂_η(s, a, s') over normalized states and raw actions.
class RewardAnnotator {
 public:
  RewardAnnotator() = default;
  RewardAnnotator(Index state_dim, Index action_dim, Index hidden, std::uint64_t seed);

  ad::Var apply(ad::Tape& tape, ad::Var features) const { return net_.apply(tape, params_, features); }
  Vector predict(const Matrix& s, const Matrix& a, const Matrix& s_next) const;

  Index state_dim() const { return state_dim_; }
  Index action_dim() const { return action_dim_; }
  Index hidden() const { return hidden_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  bool trained = false;

 private:
  Index state_dim_ = 0;
  Index action_dim_ = 0;
  Index hidden_ = 0;
  Mlp net_;
  ParameterStore params_;
};

void train_reward_annotator(RewardAnnotator& model, const env::TransitionBatch& data, const TrainConfig& config,
                            std::vector<double>* losses = nullptr);

}  // namespace cedge::energy
