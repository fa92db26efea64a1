#include "cedge/rl/iql.hpp"

#include <cmath>

namespace cedge::rl {

void IqlConfig::validate() const {
  if (!(expectile > 0.0 && expectile < 1.0)) throw ConfigError("iql: expectile must lie in (0, 1)");
  if (!(beta > 0.0)) throw ConfigError("iql: beta must be > 0");
  if (!(polyak > 0.0 && polyak <= 1.0)) throw ConfigError("iql: polyak must lie in (0, 1]");
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("iql: gamma must lie in [0, 1]");
  if (!(lr > 0.0)) throw ConfigError("iql: lr must be > 0");
  if (!(weight_clip > 0.0)) throw ConfigError("iql: weight_clip must be > 0");
  if (batch_per_buffer < 1) throw ConfigError("iql: batch_per_buffer must be >= 1");
  if (hidden < 1) throw ConfigError("iql: hidden must be >= 1");
  if (steps < 0) throw ConfigError("iql: steps must be >= 0");
}

namespace {

Matrix expectile_weights(const Matrix& u, double tau) {
  return u.unaryExpr([tau](double x) { return x < 0.0 ? 1.0 - tau : tau; });
}

}  // namespace

double expectile_loss(const Vector& u, double tau) {
  if (u.size() == 0) return 0.0;
  return (expectile_weights(u, tau).array() * u.array().square()).mean();
}

ad::Var expectile_loss(ad::Tape& tape, ad::Var u, double tau) {
  const Matrix w = expectile_weights(tape.value(u), tau);
  return tape.mean(tape.mul(tape.constant(w), tape.square(u)));
}

Vector advantage_weights(const Vector& advantage, double beta, double clip) {
  return advantage.unaryExpr([beta, clip](double a) { return std::min(std::exp(beta * a), clip); });
}

IqlAgent::IqlAgent(Index state_dim, Index action_dim, Index hidden, env::Normalizer normalizer, std::uint64_t seed)
    : state_dim_(state_dim), action_dim_(action_dim), hidden_(hidden), normalizer_(std::move(normalizer)) {
  if (normalizer_.dim() != state_dim) throw ShapeError("iql: normalizer dimension differs from state_dim");
  RngStream rng(seed, stream_id("iql.init"));
  value_net_ = Mlp("iql.v", {state_dim, hidden, hidden, 1});
  q_net_[0] = Mlp("iql.q1", {state_dim + action_dim, hidden, hidden, 1});
  q_net_[1] = Mlp("iql.q2", {state_dim + action_dim, hidden, hidden, 1});
  policy_net_ = Mlp("iql.pi", {state_dim, hidden, hidden, action_dim});
  value_net_.init(value_params, rng);
  q_net_[0].init(q_params, rng);
  q_net_[1].init(q_params, rng);
  policy_net_.init(policy_params, rng);
  policy_params.add("iql.pi.log_std", Matrix::Zero(1, action_dim));
  q_target = q_params;
}

ad::Var IqlAgent::value(ad::Tape& tape, const ParameterStore& store, ad::Var s) const {
  return value_net_.apply(tape, store, s);
}

ad::Var IqlAgent::q(ad::Tape& tape, const ParameterStore& store, int which, ad::Var s, ad::Var a) const {
  if (which != 0 && which != 1) throw UsageError("iql: q index must be 0 or 1");
  return q_net_[which].apply(tape, store, tape.concat_cols({s, a}));
}

ad::Var IqlAgent::policy_log_prob(ad::Tape& tape, const ParameterStore& store, ad::Var s, const Matrix& a) const {
  const Matrix clipped = a.cwiseMax(-kActionSquashLimit).cwiseMin(kActionSquashLimit);
  const Matrix pre = clipped.unaryExpr([](double x) { return std::atanh(x); });
  const Matrix log_jac = (1.0 - clipped.array().square()).log().matrix().rowwise().sum();
  ad::Var mu = policy_net_.apply(tape, store, s);
  ad::Var log_std = tape.gather_rows(store.bind(tape, "iql.pi.log_std"),
                                     std::vector<Index>(static_cast<std::size_t>(a.rows()), 0));
  ad::Var lp = tape.gaussian_log_density(tape.constant(pre), mu, log_std);
  return tape.sub(lp, tape.constant(log_jac));
}

Vector IqlAgent::value(const Matrix& s) const {
  ad::Tape tape;
  return tape.value(value(tape, value_params, tape.constant(s))).col(0);
}

Vector IqlAgent::q_min(const ParameterStore& store, const Matrix& s, const Matrix& a) const {
  ad::Tape tape;
  ad::Var sv = tape.constant(s), av = tape.constant(a);
  return tape.value(q(tape, store, 0, sv, av)).col(0).cwiseMin(tape.value(q(tape, store, 1, sv, av)).col(0));
}

Vector IqlAgent::policy_log_prob(const Matrix& s, const Matrix& a) const {
  ad::Tape tape;
  return tape.value(policy_log_prob(tape, policy_params, tape.constant(s), a)).col(0);
}

Matrix IqlAgent::act_normalized(const Matrix& s) const {
  ad::Tape tape;
  return tape.value(policy_net_.apply(tape, policy_params, tape.constant(s))).array().tanh().matrix();
}

env::Action2 IqlAgent::act(const env::State4& raw_state) const {
  const Matrix s = normalizer_.normalize(raw_state).transpose();
  return act_normalized(s).row(0).transpose();
}

void IqlAgent::clamp_log_std() {
  Matrix& ls = policy_params.at("iql.pi.log_std");
  ls = ls.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

void IqlAgent::update_targets(double polyak) { ema_update(q_target, q_params, 1.0 - polyak); }

namespace {

void require_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string("iql: non-finite ") + what);
}

}  // namespace

IqlRecord iql_update_step(IqlAgent& agent, const env::TransitionBatch& batch, const IqlConfig& config) {
  if (batch.size() == 0) throw UsageError("iql: empty batch");
  IqlRecord rec;
  const Vector q_tgt = agent.q_min(agent.q_target, batch.s, batch.a);

  {
    ad::Tape tape;
    ad::Var v = agent.value(tape, agent.value_params, tape.constant(batch.s));
    ad::Var u = tape.sub(tape.constant(q_tgt), v);
    ad::Var loss = expectile_loss(tape, u, config.expectile);
    rec.value_loss = tape.scalar(loss);
    require_finite(rec.value_loss, "value loss");
    agent.value_opt.step(agent.value_params, tape.backward(loss).params);
  }

  {
    const Vector mask = (1.0 - batch.done.array()).matrix();
    const Vector y = batch.r + config.gamma * mask.cwiseProduct(agent.value(batch.s_next));
    ad::Tape tape;
    ad::Var s = tape.constant(batch.s), a = tape.constant(batch.a), target = tape.constant(y);
    ad::Var l1 = tape.mean(tape.square(tape.sub(agent.q(tape, agent.q_params, 0, s, a), target)));
    ad::Var l2 = tape.mean(tape.square(tape.sub(agent.q(tape, agent.q_params, 1, s, a), target)));
    ad::Var loss = tape.add(l1, l2);
    rec.q_loss = tape.scalar(loss);
    require_finite(rec.q_loss, "q loss");
    agent.q_opt.step(agent.q_params, tape.backward(loss).params);
  }

  {
    const Vector adv = q_tgt - agent.value(batch.s);
    const Vector w = advantage_weights(adv, config.beta, config.weight_clip);
    ad::Tape tape;
    ad::Var lp = agent.policy_log_prob(tape, agent.policy_params, tape.constant(batch.s), batch.a);
    ad::Var loss = tape.scale(tape.mean(tape.mul(tape.constant(w), lp)), -1.0);
    rec.policy_loss = tape.scalar(loss);
    require_finite(rec.policy_loss, "policy loss");
    agent.policy_opt.step(agent.policy_params, tape.backward(loss).params);
    agent.clamp_log_std();
  }

  agent.update_targets(config.polyak);
  return rec;
}

namespace {

std::vector<Index> draw(Index n, Index count, RngStream& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(count));
  for (auto& i : idx) i = static_cast<Index>(rng.index(static_cast<std::uint64_t>(n)));
  return idx;
}

}  // namespace

IqlAgent train_iql(const env::OfflineDataset& synthetic, const env::OfflineDataset& target, const IqlConfig& config,
                   std::vector<IqlRecord>* history, const IqlHooks& hooks) {
  config.validate();
  if (synthetic.empty() && target.empty()) throw ConfigError("iql: both replay buffers are empty");

  std::vector<const env::OfflineDataset*> buffers;
  if (!synthetic.empty()) buffers.push_back(&synthetic);
  if (!target.empty()) buffers.push_back(&target);

  Matrix all_states(0, env::kStateDim);
  for (const auto* b : buffers) {
    Matrix s = b->states();
    Matrix grown(all_states.rows() + s.rows(), env::kStateDim);
    grown << all_states, s;
    all_states = std::move(grown);
  }
  const env::Normalizer normalizer = env::Normalizer::fit(all_states);

  std::vector<env::TransitionBatch> packed;
  for (const auto* b : buffers) {
    env::TransitionBatch tb = env::make_transition_batch(*b, &normalizer);
    if (!config.timeout_terminal) tb.done.setZero();
    packed.push_back(std::move(tb));
  }

  IqlAgent agent(env::kStateDim, env::kActionDim, config.hidden, normalizer, config.seed);
  const AdamConfig adam{config.lr, 0.9, 0.999, 1e-8, 0.0};
  agent.value_opt = Adam(adam);
  agent.q_opt = Adam(adam);
  agent.policy_opt = Adam(adam);

  RngStream rng(config.seed, stream_id("iql.batches"));
  for (long step = 1; step <= config.steps; ++step) {
    env::TransitionBatch batch;
    for (std::size_t b = 0; b < packed.size(); ++b) {
      auto part = packed[b].rows(draw(packed[b].size(), config.batch_per_buffer, rng));
      batch = b == 0 ? std::move(part) : env::TransitionBatch::concat(batch, part);
    }
    IqlRecord rec = iql_update_step(agent, batch, config);
    rec.step = step;
    if (config.eval_every > 0 && hooks.evaluate && step % config.eval_every == 0) rec.eval_score = hooks.evaluate(agent);
    if (config.checkpoint_every > 0 && hooks.checkpoint && step % config.checkpoint_every == 0)
      hooks.checkpoint(step, agent);
    if (hooks.record) hooks.record(rec);
    if (history) history->push_back(rec);
  }
  return agent;
}

env::Controller policy_controller(const IqlAgent& agent) {
  return [&agent](const env::State4& s, int, RngStream&) { return agent.act(s); };
}

env::ScoreStats evaluate_policy(const env::EnvParams& params, const IqlAgent& agent, const env::ScoreAnchors& anchors,
                                int episodes, const std::vector<std::uint64_t>& seeds) {
  return env::evaluate_controller(params, policy_controller(agent), anchors, episodes, seeds);
}

}  // namespace cedge::rl
