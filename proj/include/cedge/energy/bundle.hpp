#pragma once

#include "cedge/energy/models.hpp"

namespace cedge::energy {

struct GuidanceWeights {
  double domain = 1.0;  // λ₁
  double ret = 1.0;     // λ₂
  double policy = 0.1;  // λ₃

  void validate() const;
  bool all_zero() const { return domain == 0.0 && ret == 0.0 && policy == 0.0; }
};

// Trained guidance energies sharing one state normalizer. All energies consume
// segments in normalized trajectory space, flattened one per row (B x H·D).
// Additive constants are zero throughout.
struct EnergyBundle {
  Index horizon = 8;
  DomainClassifierPair domain;
  ReturnPredictor ret;
  BehaviorPolicyModel policy;
  GuidanceWeights weights;
  env::Normalizer normalizer;

  Index state_dim() const { return domain.state_dim; }
  Index action_dim() const { return domain.action_dim; }
  Index transition_dim() const { return state_dim() + action_dim(); }
};

// Graph builders; each returns (B x 1) per-segment energies.
//   E₁ = Σ_t [(log p(src|s,a,s') - log p(trg|s,a,s')) - (log p(src|s,a) - log p(trg|s,a))]
//   E₂ = -J_ψ(τ)
//   E₃ = Σ_t log π_ω(a_t | s_t)
ad::Var domain_energy(ad::Tape& tape, const DomainClassifierPair& pair, ad::Var tau, Index horizon);
ad::Var return_energy(ad::Tape& tape, const ReturnPredictor& predictor, ad::Var tau);
ad::Var policy_energy(ad::Tape& tape, const BehaviorPolicyModel& policy, ad::Var tau, Index horizon);
// λ₁E₁ + λ₂E₂ + λ₃E₃; members with zero weight are skipped.
ad::Var weighted_energy(ad::Tape& tape, const EnergyBundle& bundle, ad::Var tau, const GuidanceWeights& weights);

// Per-segment energy values and ∇_τ of their sum (rows are independent, so row
// i of the gradient is the gradient of segment i's energy).
struct EnergyEval {
  Vector value;
  Matrix grad;
};

EnergyEval domain_energy(const DomainClassifierPair& pair, const Matrix& tau, Index horizon);
EnergyEval return_energy(const ReturnPredictor& predictor, const Matrix& tau);
EnergyEval policy_energy(const BehaviorPolicyModel& policy, const Matrix& tau, Index horizon);
EnergyEval weighted_energy(const EnergyBundle& bundle, const Matrix& tau, const GuidanceWeights& weights);

// h = -∇_τ(λ₁E₁ + λ₂E₂ + λ₃E₃), evaluated directly on the (noisy) τ.
// Throws ConfigError if a member with nonzero weight is untrained.
Matrix weighted_energy_gradient(const EnergyBundle& bundle, const Matrix& tau, const GuidanceWeights& weights);
inline Matrix weighted_energy_gradient(const EnergyBundle& bundle, const Matrix& tau) {
  return weighted_energy_gradient(bundle, tau, bundle.weights);
}

// r̃ = r - η Δ̂_dyn(s, a, s') with Δ̂_dyn the classifier source-over-target log-ratio.
Vector dara_augment(const DomainClassifierPair& pair, const env::TransitionBatch& batch, double eta);
double dara_augment(const DomainClassifierPair& pair, const env::State4& s, const env::Action2& a,
                    const env::State4& s_next, double r, double eta);

}  // namespace cedge::energy
