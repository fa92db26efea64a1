#include "cedge/energy/models.hpp"

namespace cedge::energy {

BinaryClassifier::BinaryClassifier(std::string prefix, Index in_dim, Index hidden, std::uint64_t seed) {
  net_ = Mlp(prefix, {in_dim, hidden, hidden, 1});
  RngStream rng(seed, stream_id(prefix));
  net_.init(params_, rng);
}

Vector BinaryClassifier::logits(const Matrix& x) const {
  ad::Tape tape;
  return tape.value(logit(tape, tape.constant(x))).col(0);
}

namespace {

ad::Var cross_entropy(ad::Tape& tape, const BinaryClassifier& clf, const Matrix& source, const Matrix& target) {
  ad::Var z_src = clf.logit(tape, tape.constant(source));
  ad::Var z_trg = clf.logit(tape, tape.constant(target));
  ad::Var src_term = tape.mean(tape.log_sigmoid(tape.scale(z_src, -1.0)));
  ad::Var trg_term = tape.mean(tape.log_sigmoid(z_trg));
  return tape.scale(tape.add(src_term, trg_term), -1.0);
}

Matrix sample_rows(const Matrix& m, Index n, RngStream& rng) {
  Matrix out(n, m.cols());
  for (Index i = 0; i < n; ++i) out.row(i) = m.row(rng.index(m.rows()));
  return out;
}

}  // namespace

double classifier_loss(const BinaryClassifier& clf, const Matrix& source, const Matrix& target) {
  ad::Tape tape;
  return tape.scalar(cross_entropy(tape, clf, source, target));
}

void train_binary_classifier(BinaryClassifier& clf, const Matrix& source, const Matrix& target,
                             const TrainConfig& config, std::vector<double>* losses) {
  if (source.rows() == 0 || target.rows() == 0) throw UsageError("classifier training needs both domains non-empty");
  RngStream rng(config.seed, stream_id(clf.net().prefix() + ".train"));
  Adam adam(config.adam);
  for (long it = 0; it < config.steps; ++it) {
    Matrix src = sample_rows(source, config.batch, rng);
    Matrix trg = sample_rows(target, config.batch, rng);
    ad::Tape tape;
    ad::Var loss = cross_entropy(tape, clf, src, trg);
    if (losses) losses->push_back(tape.scalar(loss));
    adam.step(clf.params(), tape.backward(loss).params);
  }
}

DomainClassifierPair::DomainClassifierPair(Index s_dim, Index a_dim, Index hidden, std::uint64_t seed)
    : state_dim(s_dim),
      action_dim(a_dim),
      sas("sas", 2 * s_dim + a_dim, hidden, seed),
      sa("sa", s_dim + a_dim, hidden, seed) {}

Matrix sas_features(const Matrix& s, const Matrix& a, const Matrix& s_next) {
  Matrix f(s.rows(), s.cols() + a.cols() + s_next.cols());
  f << s, a, s_next;
  return f;
}

Matrix sa_features(const Matrix& s, const Matrix& a) {
  Matrix f(s.rows(), s.cols() + a.cols());
  f << s, a;
  return f;
}

Vector DomainClassifierPair::log_ratio(const Matrix& s, const Matrix& a, const Matrix& s_next) const {
  ad::Tape tape;
  ad::Var z_sas = sas.logit(tape, tape.constant(sas_features(s, a, s_next)));
  ad::Var z_sa = sa.logit(tape, tape.constant(sa_features(s, a)));
  auto log_odds_src = [&](ad::Var z) {
    return tape.sub(tape.log_sigmoid(tape.scale(z, -1.0)), tape.log_sigmoid(z));
  };
  return tape.value(tape.sub(log_odds_src(z_sas), log_odds_src(z_sa))).col(0);
}

DomainClassifierPair train_domain_classifiers(const env::TransitionBatch& source, const env::TransitionBatch& target,
                                              const TrainConfig& config, std::vector<double>* losses) {
  if (source.size() == 0 || target.size() == 0) throw UsageError("domain classifiers need source and target data");
  DomainClassifierPair pair(source.s.cols(), source.a.cols(), config.hidden, config.seed);
  std::vector<double> sas_losses, sa_losses;
  train_binary_classifier(pair.sas, sas_features(source.s, source.a, source.s_next),
                          sas_features(target.s, target.a, target.s_next), config, losses ? &sas_losses : nullptr);
  train_binary_classifier(pair.sa, sa_features(source.s, source.a), sa_features(target.s, target.a), config,
                          losses ? &sa_losses : nullptr);
  if (losses)
    for (std::size_t i = 0; i < sas_losses.size(); ++i) losses->push_back(sas_losses[i] + sa_losses[i]);
  pair.trained = true;
  return pair;
}

}  // namespace cedge::energy
