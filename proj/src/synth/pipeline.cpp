#include "cedge/synth/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cedge::synth {

SyntheticSet SyntheticSet::subset(const std::vector<Index>& rows) const {
  SyntheticSet out;
  out.seed = seed;
  out.config_hash = config_hash;
  out.segments.horizon = segments.horizon;
  out.segments.state_dim = segments.state_dim;
  out.segments.action_dim = segments.action_dim;
  const auto n = static_cast<Index>(rows.size());
  out.segments.data.resize(n, segments.width());
  if (domain_energy.size()) out.domain_energy.resize(n);
  if (return_energy.size()) out.return_energy.resize(n);
  if (rewards.size()) out.rewards.resize(n, rewards.cols());
  for (Index i = 0; i < n; ++i) {
    const Index r = rows[static_cast<std::size_t>(i)];
    if (r < 0 || r >= size()) throw std::out_of_range("subset row " + std::to_string(r));
    out.segments.data.row(i) = segments.data.row(r);
    if (domain_energy.size()) out.domain_energy(i) = domain_energy(r);
    if (return_energy.size()) out.return_energy(i) = return_energy(r);
    if (rewards.size()) out.rewards.row(i) = rewards.row(r);
    out.source_index.push_back(source_index.empty() ? r : source_index[static_cast<std::size_t>(r)]);
    if (!segments.episode.empty()) {
      out.segments.episode.push_back(segments.episode[static_cast<std::size_t>(r)]);
      out.segments.start.push_back(segments.start[static_cast<std::size_t>(r)]);
    }
  }
  return out;
}

void FilterConfig::validate() const {
  auto ok = [](double p) { return p > 0.0 && p <= 1.0; };
  if (!ok(domain_ratio)) throw ConfigError("filter: domain ratio must lie in (0, 1]");
  if (!ok(return_ratio)) throw ConfigError("filter: return ratio must lie in (0, 1]");
}

Index segments_for_budget(long budget, Index horizon) {
  if (budget <= 0) throw ConfigError("generation budget must be positive");
  if (horizon < 2) throw ConfigError("generation needs horizon >= 2");
  const long per = static_cast<long>(horizon) - 1;
  return static_cast<Index>((budget + per - 1) / per);
}

env::SegmentSet generate_synthetic(const GenerationModels& models, const sampler::SamplerConfig& sampler,
                                   const energy::GuidanceWeights& weights, long budget, std::uint64_t seed) {
  const auto& arch = models.denoiser.arch();
  sampler::SamplerConfig sc = sampler;
  sc.num_samples = static_cast<int>(segments_for_budget(budget, arch.horizon));
  sc.seed = seed;
  env::SegmentSet out;
  out.horizon = arch.horizon;
  out.state_dim = arch.state_dim;
  out.action_dim = arch.action_dim;
  out.data = sampler::sample_trajectories(models.schedule, sampler::ema_denoiser(models.denoiser),
                                          sampler::energy_guidance(models.bundle, weights), sc, arch.width());
  return out;
}

namespace {

// Rows t and t + 1 of every segment, packed for transition-level models.
struct Pairs {
  Matrix s, a, s_next;
};

Pairs consecutive_pairs(const env::SegmentSet& segments) {
  const Index H = segments.horizon, ds = segments.state_dim, da = segments.action_dim, D = ds + da;
  const Index n = segments.size() * (H - 1);
  Pairs p{Matrix(n, ds), Matrix(n, da), Matrix(n, ds)};
  Index row = 0;
  for (Index i = 0; i < segments.size(); ++i) {
    for (Index t = 0; t + 1 < H; ++t, ++row) {
      p.s.row(row) = segments.data.row(i).segment(t * D, ds);
      p.a.row(row) = segments.data.row(i).segment(t * D + ds, da);
      p.s_next.row(row) = segments.data.row(i).segment((t + 1) * D, ds);
    }
  }
  return p;
}

}  // namespace

Matrix annotate_rewards(const energy::RewardAnnotator& annotator, const env::SegmentSet& segments) {
  if (!annotator.trained) throw ConfigError("reward annotator is not trained");
  if (segments.horizon < 2) throw ConfigError("annotation needs horizon >= 2");
  const Pairs p = consecutive_pairs(segments);
  const Vector r = annotator.predict(p.s, p.a, p.s_next);
  Matrix out(segments.size(), segments.horizon - 1);
  for (Index i = 0; i < out.rows(); ++i)
    for (Index t = 0; t < out.cols(); ++t) out(i, t) = r(i * out.cols() + t);
  return out;
}

SyntheticSet score_segments(const energy::EnergyBundle& bundle, env::SegmentSet segments) {
  if (!bundle.domain.trained) throw ConfigError("domain classifiers are not trained");
  if (!bundle.ret.trained) throw ConfigError("return predictor is not trained");
  SyntheticSet out;
  out.segments = std::move(segments);
  out.domain_energy = energy::domain_energy(bundle.domain, out.segments.data, out.segments.horizon).value;
  out.return_energy = -bundle.ret.predict(out.segments.data);
  out.source_index.resize(static_cast<std::size_t>(out.size()));
  std::iota(out.source_index.begin(), out.source_index.end(), Index{0});
  return out;
}

Index keep_count(double ratio, Index m) {
  if (m <= 0) return 0;
  return std::max<Index>(1, static_cast<Index>(std::floor(ratio * static_cast<double>(m))));
}

namespace {

// The `count` lowest-energy entries of `pool`, ties by position.
std::vector<Index> lowest(const Vector& energy, std::vector<Index> pool, Index count) {
  for (Index i : pool)
    if (std::isnan(energy(i))) throw NumericError("segment " + std::to_string(i) + " has NaN energy");
  std::stable_sort(pool.begin(), pool.end(), [&](Index a, Index b) { return energy(a) < energy(b); });
  pool.resize(static_cast<std::size_t>(count));
  return pool;
}

}  // namespace

std::vector<Index> filter_indices(const Vector& domain_energy, const Vector& return_energy,
                                  const FilterConfig& config) {
  config.validate();
  const Index m = domain_energy.size();
  if (m == 0) throw ConfigError("filter: no segments to filter");
  if (return_energy.size() != m) throw ShapeError("filter: energy vectors differ in length");
  std::vector<Index> all(static_cast<std::size_t>(m));
  std::iota(all.begin(), all.end(), Index{0});
  auto stage1 = lowest(domain_energy, all, keep_count(config.domain_ratio, m));
  std::sort(stage1.begin(), stage1.end());
  auto stage2 = lowest(return_energy, stage1, keep_count(config.return_ratio, static_cast<Index>(stage1.size())));
  std::sort(stage2.begin(), stage2.end());
  return stage2;
}

SyntheticSet filter_trajectories(const SyntheticSet& set, const FilterConfig& config) {
  return set.subset(filter_indices(set.domain_energy, set.return_energy, config));
}

TrainingBuffers assemble_training_set(const SyntheticSet& retained, const energy::RewardAnnotator& annotator,
                                      const env::Normalizer& normalizer, const env::OfflineDataset& target) {
  if (retained.size() == 0)
    throw ConfigError("no synthetic segments survived filtering; increase the filter ratios or the budget");
  const auto& seg = retained.segments;
  if (seg.state_dim != env::kStateDim || seg.action_dim != env::kActionDim)
    throw ShapeError("assembly expects point-mass segments");
  const Matrix rewards = annotate_rewards(annotator, seg);
  const Pairs p = consecutive_pairs(seg);
  const Matrix s = normalizer.denormalize(p.s);
  const Matrix s_next = normalizer.denormalize(p.s_next);

  TrainingBuffers out;
  out.target = target;
  const Index steps = seg.horizon - 1;
  for (Index i = 0; i < seg.size(); ++i) {
    for (Index t = 0; t < steps; ++t) {
      const Index row = i * steps + t;
      env::Transition tr;
      tr.s = s.row(row).transpose();
      tr.a = p.a.row(row).transpose().cwiseMax(-1.0).cwiseMin(1.0);
      tr.s_next = s_next.row(row).transpose();
      tr.r = rewards(i, t);
      tr.done = false;
      tr.episode = static_cast<int>(i);
      tr.t = static_cast<int>(t);
      out.synthetic.push_back(tr);
    }
  }
  return out;
}

}  // namespace cedge::synth
