#include "cedge/energy/models.hpp"

namespace cedge::energy {

namespace {

std::vector<Index> sample_indices(Index n, Index count, RngStream& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(count));
  for (auto& i : idx) i = rng.index(n);
  return idx;
}

Matrix take_rows(const Matrix& m, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = m.row(idx[i]);
  return out;
}

}  // namespace

ReturnArch parse_return_arch(const std::string& name) {
  if (name == "conv") return ReturnArch::kConv;
  if (name == "dense") return ReturnArch::kDense;
  throw ConfigError("unknown return predictor architecture '" + name + "' (expected conv or dense)");
}

std::string return_arch_name(ReturnArch arch) { return arch == ReturnArch::kConv ? "conv" : "dense"; }

ReturnPredictor::ReturnPredictor(ReturnArch arch, Index horizon, Index transition_dim, Index hidden, Index channels,
                                 double gamma, std::uint64_t seed)
    : arch_(arch),
      horizon_(horizon),
      transition_dim_(transition_dim),
      hidden_(hidden),
      channels_(channels),
      gamma_(gamma) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("return predictor: gamma must lie in (0, 1)");
  RngStream rng(seed, stream_id("return"));
  if (arch_ == ReturnArch::kConv) {
    encoder_ = ConvStack("return.enc", {transition_dim, channels, channels}, 3, true);
    head_ = Mlp("return.head", {channels, 1});
    encoder_.init(params_, rng);
  } else {
    head_ = Mlp("return.head", {horizon * transition_dim, hidden, hidden, 1});
  }
  head_.init(params_, rng);
}

ad::Var ReturnPredictor::apply(ad::Tape& tape, const ParameterStore& store, ad::Var tau) const {
  if (arch_ == ReturnArch::kDense) return head_.apply(tape, store, tau);
  const Index batch = tape.value(tau).rows();
  ad::Var rows = tape.reshape(tau, batch * horizon_, transition_dim_);
  ad::Var features = encoder_.apply(tape, store, rows, horizon_);
  return head_.apply(tape, store, tape.group_mean(features, horizon_));
}

Vector ReturnPredictor::predict(const Matrix& tau) const {
  ad::Tape tape;
  return tape.value(apply(tape, tape.constant(tau))).col(0);
}

void train_return_predictor(ReturnPredictor& model, const env::SegmentSet& segments, const TrainConfig& config,
                            std::vector<double>* losses) {
  if (segments.size() == 0) throw UsageError("return predictor: no training segments");
  const Vector targets = env::discounted_returns(segments, model.gamma());
  model.params().at("return.head.l" + std::to_string(model.arch() == ReturnArch::kConv ? 0 : 2) + ".bias")(0, 0) =
      targets.mean();
  RngStream rng(config.seed, stream_id("return.train"));
  Adam adam(config.adam);
  for (long it = 0; it < config.steps; ++it) {
    auto idx = sample_indices(segments.size(), config.batch, rng);
    Matrix y(config.batch, 1);
    for (Index i = 0; i < config.batch; ++i) y(i, 0) = targets(idx[static_cast<std::size_t>(i)]);
    ad::Tape tape;
    ad::Var pred = model.apply(tape, model.params(), tape.constant(take_rows(segments.data, idx)));
    ad::Var loss = tape.mean(tape.square(tape.sub(pred, tape.constant(y))));
    if (losses) losses->push_back(tape.scalar(loss));
    adam.step(model.params(), tape.backward(loss).params);
  }
  model.trained = true;
}

BehaviorPolicyModel::BehaviorPolicyModel(Index state_dim, Index action_dim, Index hidden, std::uint64_t seed)
    : state_dim_(state_dim), action_dim_(action_dim), hidden_(hidden) {
  RngStream rng(seed, stream_id("policy"));
  mean_net_ = Mlp("policy.mean", {state_dim, hidden, hidden, action_dim});
  mean_net_.init(params_, rng);
  params_.add("policy.log_std", Matrix::Zero(1, action_dim));
}

ad::Var BehaviorPolicyModel::log_prob(ad::Tape& tape, const ParameterStore& store, ad::Var s, ad::Var a) const {
  ad::Var mu = mean_net_.apply(tape, store, s);
  ad::Var log_std = tape.gather_rows(store.bind(tape, "policy.log_std"),
                                     std::vector<Index>(static_cast<std::size_t>(tape.value(s).rows()), 0));
  return tape.gaussian_log_density(a, mu, log_std);
}

Vector BehaviorPolicyModel::log_prob(const Matrix& s, const Matrix& a) const {
  ad::Tape tape;
  return tape.value(log_prob(tape, tape.constant(s), tape.constant(a))).col(0);
}

Matrix BehaviorPolicyModel::mean(const Matrix& s) const {
  ad::Tape tape;
  return tape.value(mean_net_.apply(tape, params_, tape.constant(s)));
}

void BehaviorPolicyModel::clamp_log_std() {
  Matrix& ls = params_.at("policy.log_std");
  ls = ls.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

double behavior_nll(const BehaviorPolicyModel& model, const Matrix& states, const Matrix& actions) {
  return -model.log_prob(states, actions).mean();
}

void train_behavior_policy(BehaviorPolicyModel& model, const Matrix& states, const Matrix& actions,
                           const TrainConfig& config, std::vector<double>* losses) {
  if (states.rows() == 0) throw UsageError("behavior policy: no training data");
  if (states.rows() != actions.rows()) throw ShapeError("behavior policy: state/action row mismatch");
  RngStream rng(config.seed, stream_id("policy.train"));
  Adam adam(config.adam);
  for (long it = 0; it < config.steps; ++it) {
    auto idx = sample_indices(states.rows(), config.batch, rng);
    ad::Tape tape;
    ad::Var lp = model.log_prob(tape, model.params(), tape.constant(take_rows(states, idx)),
                                tape.constant(take_rows(actions, idx)));
    ad::Var loss = tape.scale(tape.mean(lp), -1.0);
    if (losses) losses->push_back(tape.scalar(loss));
    adam.step(model.params(), tape.backward(loss).params);
    model.clamp_log_std();
  }
  model.trained = true;
}

RewardAnnotator::RewardAnnotator(Index state_dim, Index action_dim, Index hidden, std::uint64_t seed)
    : state_dim_(state_dim), action_dim_(action_dim), hidden_(hidden) {
  RngStream rng(seed, stream_id("reward"));
  net_ = Mlp("reward", {2 * state_dim + action_dim, hidden, hidden, 1});
  net_.init(params_, rng);
}

Vector RewardAnnotator::predict(const Matrix& s, const Matrix& a, const Matrix& s_next) const {
  ad::Tape tape;
  return tape.value(apply(tape, tape.constant(sas_features(s, a, s_next)))).col(0);
}

void train_reward_annotator(RewardAnnotator& model, const env::TransitionBatch& data, const TrainConfig& config,
                            std::vector<double>* losses) {
  if (data.size() == 0) throw UsageError("reward annotator: no training data");
  model.params().at("reward.l2.bias")(0, 0) = data.r.mean();
  const Matrix features = sas_features(data.s, data.a, data.s_next);
  RngStream rng(config.seed, stream_id("reward.train"));
  Adam adam(config.adam);
  for (long it = 0; it < config.steps; ++it) {
    auto idx = sample_indices(data.size(), config.batch, rng);
    Matrix y(config.batch, 1);
    for (Index i = 0; i < config.batch; ++i) y(i, 0) = data.r(idx[static_cast<std::size_t>(i)]);
    ad::Tape tape;
    ad::Var pred = model.apply(tape, tape.constant(take_rows(features, idx)));
    ad::Var loss = tape.mean(tape.square(tape.sub(pred, tape.constant(y))));
    if (losses) losses->push_back(tape.scalar(loss));
    adam.step(model.params(), tape.backward(loss).params);
  }
  model.trained = true;
}

}  // namespace cedge::energy
