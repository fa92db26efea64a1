#include "cedge/energy/bundle.hpp"

#include <cmath>

namespace cedge::energy {

void GuidanceWeights::validate() const {
  for (double w : {domain, ret, policy})
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("guidance weights must be finite and non-negative");
}

namespace {

struct TransitionViews {
  ad::Var s, a, s_next;
};

// Consecutive row pairs (t, t + 1), t < H - 1, of every segment.
TransitionViews transitions(ad::Tape& tape, ad::Var tau, Index horizon, Index state_dim, Index action_dim) {
  const Index batch = tape.value(tau).rows();
  const Index d = state_dim + action_dim;
  if (horizon < 2) throw ShapeError("domain energy needs a horizon of at least 2");
  if (tape.value(tau).cols() != horizon * d)
    throw ShapeError("energy: segment width " + std::to_string(tape.value(tau).cols()) + " != H x D = " +
                     std::to_string(horizon * d));
  ad::Var rows = tape.reshape(tau, batch * horizon, d);
  std::vector<Index> cur, nxt;
  cur.reserve(static_cast<std::size_t>(batch * (horizon - 1)));
  nxt.reserve(cur.capacity());
  for (Index b = 0; b < batch; ++b)
    for (Index t = 0; t + 1 < horizon; ++t) {
      cur.push_back(b * horizon + t);
      nxt.push_back(b * horizon + t + 1);
    }
  ad::Var c = tape.gather_rows(rows, std::move(cur));
  ad::Var n = tape.gather_rows(rows, std::move(nxt));
  return {tape.slice_cols(c, 0, state_dim), tape.slice_cols(c, state_dim, action_dim), tape.slice_cols(n, 0, state_dim)};
}

ad::Var log_odds_source(ad::Tape& tape, ad::Var z) {
  return tape.sub(tape.log_sigmoid(tape.scale(z, -1.0)), tape.log_sigmoid(z));
}

EnergyEval eval_with_grad(const Matrix& tau, const std::function<ad::Var(ad::Tape&, ad::Var)>& build) {
  ad::Tape tape;
  ad::Var x = tape.input("tau", tau);
  ad::Var e = build(tape, x);
  EnergyEval out;
  out.value = tape.value(e).col(0);
  auto grads = tape.backward(tape.sum(e));
  auto it = grads.inputs.find("tau");
  out.grad = it != grads.inputs.end() ? it->second : Matrix::Zero(tau.rows(), tau.cols());
  return out;
}

}  // namespace

ad::Var domain_energy(ad::Tape& tape, const DomainClassifierPair& pair, ad::Var tau, Index horizon) {
  TransitionViews v = transitions(tape, tau, horizon, pair.state_dim, pair.action_dim);
  ad::Var z_sas = pair.sas.logit(tape, tape.concat_cols({v.s, v.a, v.s_next}));
  ad::Var z_sa = pair.sa.logit(tape, tape.concat_cols({v.s, v.a}));
  ad::Var per_step = tape.sub(log_odds_source(tape, z_sas), log_odds_source(tape, z_sa));
  return tape.group_sum(per_step, horizon - 1);
}

ad::Var return_energy(ad::Tape& tape, const ReturnPredictor& predictor, ad::Var tau) {
  return tape.scale(predictor.apply(tape, tau), -1.0);
}

ad::Var policy_energy(ad::Tape& tape, const BehaviorPolicyModel& policy, ad::Var tau, Index horizon) {
  const Index batch = tape.value(tau).rows();
  const Index d = policy.state_dim() + policy.action_dim();
  if (tape.value(tau).cols() != horizon * d)
    throw ShapeError("policy energy: segment width " + std::to_string(tape.value(tau).cols()) + " != H x D");
  ad::Var rows = tape.reshape(tau, batch * horizon, d);
  ad::Var s = tape.slice_cols(rows, 0, policy.state_dim());
  ad::Var a = tape.slice_cols(rows, policy.state_dim(), policy.action_dim());
  return tape.group_sum(policy.log_prob(tape, s, a), horizon);
}

ad::Var weighted_energy(ad::Tape& tape, const EnergyBundle& bundle, ad::Var tau, const GuidanceWeights& weights) {
  weights.validate();
  if (weights.domain != 0.0 && !bundle.domain.trained)
    throw ConfigError("guidance: domain energy has nonzero weight but the classifiers are untrained");
  if (weights.ret != 0.0 && !bundle.ret.trained)
    throw ConfigError("guidance: return energy has nonzero weight but the predictor is untrained");
  if (weights.policy != 0.0 && !bundle.policy.trained)
    throw ConfigError("guidance: policy energy has nonzero weight but the behavior policy is untrained");
  ad::Var total = tape.constant(Matrix::Zero(tape.value(tau).rows(), 1));
  if (weights.domain != 0.0)
    total = tape.add(total, tape.scale(domain_energy(tape, bundle.domain, tau, bundle.horizon), weights.domain));
  if (weights.ret != 0.0) total = tape.add(total, tape.scale(return_energy(tape, bundle.ret, tau), weights.ret));
  if (weights.policy != 0.0)
    total = tape.add(total, tape.scale(policy_energy(tape, bundle.policy, tau, bundle.horizon), weights.policy));
  return total;
}

EnergyEval domain_energy(const DomainClassifierPair& pair, const Matrix& tau, Index horizon) {
  return eval_with_grad(tau, [&](ad::Tape& t, ad::Var x) { return domain_energy(t, pair, x, horizon); });
}

EnergyEval return_energy(const ReturnPredictor& predictor, const Matrix& tau) {
  return eval_with_grad(tau, [&](ad::Tape& t, ad::Var x) { return return_energy(t, predictor, x); });
}

EnergyEval policy_energy(const BehaviorPolicyModel& policy, const Matrix& tau, Index horizon) {
  return eval_with_grad(tau, [&](ad::Tape& t, ad::Var x) { return policy_energy(t, policy, x, horizon); });
}

EnergyEval weighted_energy(const EnergyBundle& bundle, const Matrix& tau, const GuidanceWeights& weights) {
  return eval_with_grad(tau, [&](ad::Tape& t, ad::Var x) { return weighted_energy(t, bundle, x, weights); });
}

Matrix weighted_energy_gradient(const EnergyBundle& bundle, const Matrix& tau, const GuidanceWeights& weights) {
  if (weights.all_zero()) {
    weights.validate();
    return Matrix::Zero(tau.rows(), tau.cols());
  }
  return -weighted_energy(bundle, tau, weights).grad;
}

Vector dara_augment(const DomainClassifierPair& pair, const env::TransitionBatch& batch, double eta) {
  if (eta == 0.0) return batch.r;
  return batch.r - eta * pair.log_ratio(batch.s, batch.a, batch.s_next);
}

double dara_augment(const DomainClassifierPair& pair, const env::State4& s, const env::Action2& a,
                    const env::State4& s_next, double r, double eta) {
  env::TransitionBatch b;
  b.s = s.transpose();
  b.a = a.transpose();
  b.s_next = s_next.transpose();
  b.r = Vector::Constant(1, r);
  b.done = Vector::Zero(1);
  return dara_augment(pair, b, eta)(0);
}

}  // namespace cedge::energy
