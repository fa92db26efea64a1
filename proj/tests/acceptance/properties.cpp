#include "acceptance.hpp"

#include "../support.hpp"

#include "cedge/diffusion/denoiser.hpp"
#include "cedge/energy/bundle.hpp"
#include "cedge/energy/models.hpp"
#include "cedge/env/pointmass.hpp"
#include "cedge/planner/planner.hpp"
#include "cedge/rl/iql.hpp"
#include "cedge/sampler/guided_sampler.hpp"
#include "cedge/synth/pipeline.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace cedge::acceptance {
namespace {

using cedge::testing::check_gradients;
using cedge::testing::GradCheck;
using cedge::testing::project;
using cedge::testing::random_matrix;

double elapsed(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

// ---------------------------------------------------------------- 1

struct FdTally {
  std::string name;
  double worst = 0.0;
  int draws = 0;
  long coords = 0;
  long skipped = 0;

  void add(const GradCheck& g) {
    worst = std::max(worst, g.rel_error);
    ++draws;
    coords += g.coords;
    skipped += g.skipped;
  }
};

env::Normalizer unit_normalizer() { return env::Normalizer(Vector::Zero(4), Vector::Ones(4)); }

Outcome gradient_oracle() {
  constexpr int kDraws = 20;
  const auto start = std::chrono::steady_clock::now();
  std::vector<FdTally> tallies;
  auto run = [&](const std::string& name, const std::function<GradCheck(std::uint64_t)>& draw) {
    FdTally t{name};
    for (int d = 0; d < kDraws; ++d) t.add(draw(1000 + static_cast<std::uint64_t>(d)));
    tallies.push_back(t);
  };

  for (auto kind : {diffusion::DenoiserKind::kDense, diffusion::DenoiserKind::kConv}) {
    run(std::string("denoiser.") + diffusion::denoiser_kind_name(kind), [kind](std::uint64_t seed) {
      diffusion::DenoiserArch arch;
      arch.kind = kind;
      arch.horizon = 4;
      arch.hidden = 8;
      arch.embed_dim = 4;
      arch.channels = 4;
      arch.kernel = 3;
      diffusion::Denoiser d(arch, seed);
      RngStream rng(seed, 1);
      const Matrix x = random_matrix(2, arch.width(), rng);
      const Matrix k = (Matrix(2, 1) << 1.0 + static_cast<double>(rng.index(20)), 1.0 + static_cast<double>(rng.index(20))).finished();
      return check_gradients(
          [&](ad::Tape& t, const std::vector<ad::Var>& v) {
            return project(t, d.apply(t, d.params(), v[0], t.constant(k)), seed);
          },
          {x}, &d.params());
    });
  }

  for (const char* which : {"sas", "sa"}) {
    const bool sas = std::string(which) == "sas";
    run(std::string("classifier.") + which, [sas](std::uint64_t seed) {
      energy::DomainClassifierPair pair(4, 2, 8, seed);
      auto& clf = sas ? pair.sas : pair.sa;
      RngStream rng(seed, 2);
      const Matrix x = random_matrix(3, sas ? 10 : 6, rng);
      return check_gradients(
          [&](ad::Tape& t, const std::vector<ad::Var>& v) { return project(t, clf.logit(t, v[0]), seed); }, {x},
          &clf.params());
    });
  }

  for (auto arch : {energy::ReturnArch::kConv, energy::ReturnArch::kDense}) {
    run("return." + energy::return_arch_name(arch), [arch](std::uint64_t seed) {
      energy::ReturnPredictor model(arch, 4, 6, 8, 4, 0.99, seed);
      RngStream rng(seed, 3);
      const Matrix tau = random_matrix(3, 24, rng);
      return check_gradients(
          [&](ad::Tape& t, const std::vector<ad::Var>& v) { return project(t, model.apply(t, v[0]), seed); }, {tau},
          &model.params());
    });
  }

  run("behavior_policy", [](std::uint64_t seed) {
    energy::BehaviorPolicyModel model(4, 2, 8, seed);
    RngStream rng(seed, 4);
    model.params().at("policy.log_std") = random_matrix(1, 2, rng, 0.5);
    const Matrix s = random_matrix(3, 4, rng), a = random_matrix(3, 2, rng, 0.5);
    return check_gradients(
        [&](ad::Tape& t, const std::vector<ad::Var>& v) { return project(t, model.log_prob(t, v[0], v[1]), seed); },
        {s, a}, &model.params());
  });

  run("reward_annotator", [](std::uint64_t seed) {
    energy::RewardAnnotator model(4, 2, 8, seed);
    RngStream rng(seed, 5);
    const Matrix x = random_matrix(3, 10, rng);
    return check_gradients(
        [&](ad::Tape& t, const std::vector<ad::Var>& v) { return project(t, model.apply(t, v[0]), seed); }, {x},
        &model.params());
  });

  run("iql.value", [](std::uint64_t seed) {
    rl::IqlAgent agent(4, 2, 8, unit_normalizer(), seed);
    RngStream rng(seed, 6);
    const Matrix s = random_matrix(3, 4, rng);
    return check_gradients(
        [&](ad::Tape& t, const std::vector<ad::Var>& v) {
          return project(t, agent.value(t, agent.value_params, v[0]), seed);
        },
        {s}, &agent.value_params);
  });
  for (int which : {0, 1}) {
    run(fmt::format("iql.q{}", which + 1), [which](std::uint64_t seed) {
      rl::IqlAgent agent(4, 2, 8, unit_normalizer(), seed);
      RngStream rng(seed, 7);
      const Matrix s = random_matrix(3, 4, rng), a = random_matrix(3, 2, rng, 0.5);
      return check_gradients(
          [&](ad::Tape& t, const std::vector<ad::Var>& v) {
            return project(t, agent.q(t, agent.q_params, which, v[0], v[1]), seed);
          },
          {s, a}, &agent.q_params);
    });
  }
  run("iql.policy", [](std::uint64_t seed) {
    rl::IqlAgent agent(4, 2, 8, unit_normalizer(), seed);
    RngStream rng(seed, 8);
    const Matrix s = random_matrix(3, 4, rng);
    Matrix a(3, 2);
    for (Index i = 0; i < a.size(); ++i) a(i) = rng.uniform(-0.9, 0.9);
    return check_gradients(
        [&](ad::Tape& t, const std::vector<ad::Var>& v) {
          return project(t, agent.policy_log_prob(t, agent.policy_params, v[0], a), seed);
        },
        {s}, &agent.policy_params);
  });

  const double seconds = elapsed(start);
  bool pass = seconds < 120.0;
  std::string detail;
  double worst = 0.0;
  for (const auto& t : tallies) {
    const bool ok = t.worst < 1e-4 && t.draws >= kDraws && t.skipped * 20 <= t.coords;
    pass = pass && ok;
    worst = std::max(worst, t.worst);
    if (!ok) detail += fmt::format(" {}: rel {:.2e}, skipped {}/{};", t.name, t.worst, t.skipped, t.coords);
  }
  return {pass, fmt::format("{} architectures x {} draws, worst rel error {:.2e}, {:.1f}s{}", tallies.size(), kDraws,
                            worst, seconds, detail)};
}

// ---------------------------------------------------------------- 2

Outcome forward_moments() {
  constexpr Index n = 100000;
  const int T = 20;
  const auto schedule = diffusion::build_cosine_schedule(T);
  const RowVector tau0 = (RowVector(6) << 1.5, -0.7, 0.3, 2.0, -1.2, 0.05).finished();
  const Matrix x0 = tau0.replicate(n, 1);
  bool pass = true;
  double worst_mean = 0.0, worst_std = 0.0;
  for (int k : {1, T / 2, T}) {
    Matrix eps(n, tau0.size());
    RngStream rng(42, static_cast<std::uint64_t>(k));
    rng.fill_normal(eps);
    const Matrix tk = diffusion::forward_noise(schedule, x0, k, eps);
    const double ab = schedule.alpha_bar(k);
    const double sd_expected = std::sqrt(1.0 - ab);
    for (Index c = 0; c < tk.cols(); ++c) {
      const double mean = tk.col(c).mean();
      const double sd = std::sqrt((tk.col(c).array() - mean).square().mean());
      const double mu = std::sqrt(ab) * tau0(c);
      // 1% of the mean where it dominates, of the spread where it does not.
      const double mean_err = std::abs(mean - mu) / std::max(std::abs(mu), sd_expected);
      const double std_err = std::abs(sd - sd_expected) / sd_expected;
      worst_mean = std::max(worst_mean, mean_err);
      worst_std = std::max(worst_std, std_err);
      pass = pass && mean_err < 0.01 && std_err < 0.01;
    }
  }
  return {pass, fmt::format("k in {{1,{},{}}}, 1e5 draws: worst mean error {:.3f}%, worst std error {:.3f}%", T / 2, T,
                            100 * worst_mean, 100 * worst_std)};
}

// ---------------------------------------------------------------- 3

// Plain DDPM written from the schedule's betas alone.
Matrix reference_ddpm(const std::vector<double>& betas, const diffusion::Denoiser& model, Index n, std::uint64_t seed,
                      double temperature) {
  const int T = static_cast<int>(betas.size());
  std::vector<double> ab(static_cast<std::size_t>(T) + 1, 1.0);
  for (int k = 1; k <= T; ++k) ab[k] = ab[k - 1] * (1.0 - betas[k - 1]);
  const Index w = model.arch().width();
  std::vector<RngStream> rng;
  for (Index i = 0; i < n; ++i) rng.emplace_back(seed, static_cast<std::uint64_t>(i));
  Matrix x(n, w);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < w; ++j) x(i, j) = rng[static_cast<std::size_t>(i)].normal();
  for (int k = T; k >= 1; --k) {
    const Matrix x0 = model.predict(x, k, true);
    const double b = betas[k - 1];
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < w; ++j) {
        const double score = -(x(i, j) - std::sqrt(ab[k]) * x0(i, j)) / (1 - ab[k]);
        x(i, j) = (x(i, j) + b * score) / std::sqrt(1 - b);
      }
    if (k > 1) {
      const double sigma = temperature * std::sqrt((1 - ab[k - 1]) / (1 - ab[k]) * b);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < w; ++j) x(i, j) += sigma * rng[static_cast<std::size_t>(i)].normal();
    }
  }
  return x;
}

energy::EnergyBundle small_bundle(std::uint64_t seed, Index horizon) {
  energy::EnergyBundle b;
  b.horizon = horizon;
  b.domain = energy::DomainClassifierPair(4, 2, 16, seed);
  b.domain.trained = true;
  b.ret = energy::ReturnPredictor(energy::ReturnArch::kConv, horizon, 6, 16, 8, 0.99, seed + 1);
  b.ret.trained = true;
  b.policy = energy::BehaviorPolicyModel(4, 2, 16, seed + 2);
  b.policy.trained = true;
  b.normalizer = env::Normalizer(Vector::Zero(4), Vector::Ones(4));
  return b;
}

Outcome zero_guidance_reduction() {
  diffusion::DenoiserArch arch;
  arch.horizon = 8;
  arch.hidden = 64;
  arch.embed_dim = 16;
  diffusion::Denoiser model(arch, 11);
  const auto schedule = diffusion::build_cosine_schedule(20);
  std::vector<double> betas;
  for (int k = 1; k <= 20; ++k) betas.push_back(schedule.beta(k));
  const auto bundle = small_bundle(12, arch.horizon);
  const energy::GuidanceWeights zero{0.0, 0.0, 0.0};
  // The explicit form evaluates the weighted gradient, which is all zeros.
  const sampler::GuidanceFn explicit_zero = [&](const Matrix& tau, int) {
    return energy::weighted_energy_gradient(bundle, tau, zero);
  };

  int chains = 0, mismatched = 0;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    sampler::SamplerConfig cfg;
    cfg.num_samples = 25;
    cfg.seed = seed;
    cfg.temperature = seed % 2 == 0 ? 0.5 : 1.0;
    const Matrix expected = reference_ddpm(betas, model, cfg.num_samples, seed, cfg.temperature);
    const auto den = sampler::ema_denoiser(model);
    const Matrix a = sampler::sample_trajectories(schedule, den, sampler::energy_guidance(bundle, zero), cfg, arch.width());
    const Matrix b = sampler::sample_trajectories(schedule, den, explicit_zero, cfg, arch.width());
    for (Index i = 0; i < expected.rows(); ++i) {
      ++chains;
      if (!(a.row(i) == expected.row(i)) || !(b.row(i) == expected.row(i))) ++mismatched;
    }
  }
  return {chains == 100 && mismatched == 0,
          fmt::format("{} chains over 4 seeds, {} differ bitwise from the reference DDPM", chains, mismatched)};
}

// ---------------------------------------------------------------- 4

Outcome tilted_gaussian() {
  const auto start = std::chrono::steady_clock::now();
  const auto schedule = diffusion::build_cosine_schedule(100);
  auto denoise = [&](const Matrix& t, int k) { return (std::sqrt(schedule.alpha_bar(k)) * t).eval(); };
  auto guidance = [](const Matrix& t, int) { return Matrix::Constant(t.rows(), t.cols(), -1.0).eval(); };
  sampler::SamplerConfig cfg;
  cfg.rho = sampler::tilted_gaussian_rho(schedule, 1.0);
  cfg.temperature = 1.0;
  cfg.num_samples = 100000;
  cfg.seed = 2024;
  const Matrix x = sampler::sample_trajectories(schedule, denoise, guidance, cfg, 1);
  const double mean = x.mean();
  const double sd = std::sqrt((x.array() - mean).square().mean());
  const double seconds = elapsed(start);
  const bool pass = mean >= -1.05 && mean <= -0.95 && sd >= 0.93 && sd <= 1.07 && seconds < 60.0;
  return {pass, fmt::format("1e5 samples: mean {:.4f}, std {:.4f}, {:.1f}s", mean, sd, seconds)};
}

// ---------------------------------------------------------------- 5

Outcome density_ratio() {
  const auto start = std::chrono::steady_clock::now();
  constexpr Index n = 10000;
  RngStream rng(5, 0);
  auto make = [&](double shift, Index rows) {
    env::TransitionBatch b;
    b.s.resize(rows, 1);
    b.a.resize(rows, 1);
    b.s_next.resize(rows, 1);
    b.r = Vector::Zero(rows);
    b.done = Vector::Zero(rows);
    for (Index i = 0; i < rows; ++i) {
      b.s(i, 0) = rng.normal();
      b.a(i, 0) = rng.uniform(-1.0, 1.0);
      b.s_next(i, 0) = shift + rng.normal();
    }
    return b;
  };
  const auto source = make(0.0, n), target = make(0.5, n);
  energy::TrainConfig cfg;
  cfg.steps = 4000;
  cfg.batch = 128;
  cfg.hidden = 32;
  cfg.adam.lr = 1e-3;
  cfg.adam.weight_decay = 1e-4;
  cfg.seed = 9;
  const auto pair = energy::train_domain_classifiers(source, target, cfg);

  // Held-out transitions with next states on a grid over [-2, 2].
  constexpr Index m = 2001;
  Matrix s(m, 1), a(m, 1), sn(m, 1);
  for (Index i = 0; i < m; ++i) {
    s(i, 0) = rng.normal();
    a(i, 0) = rng.uniform(-1.0, 1.0);
    sn(i, 0) = -2.0 + 4.0 * static_cast<double>(i) / static_cast<double>(m - 1);
  }
  // log_ratio is source over target; the analytic target-over-source ratio is 0.5x - 0.125.
  const Vector estimate = -pair.log_ratio(s, a, sn);
  double mae = 0.0;
  for (Index i = 0; i < m; ++i) mae += std::abs(estimate(i) - (0.5 * sn(i, 0) - 0.125));
  mae /= static_cast<double>(m);
  const double seconds = elapsed(start);
  return {mae < 0.15 && seconds < 300.0, fmt::format("held-out MAE {:.4f} on [-2, 2], {:.1f}s", mae, seconds)};
}

// ---------------------------------------------------------------- 6

// Sort-based two-stage filter, independent of the production partial sort.
std::vector<Index> reference_filter(const Vector& e1, const Vector& e2, double p1, double p2) {
  std::vector<Index> idx(static_cast<std::size_t>(e1.size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return e1(a) < e1(b); });
  const auto k1 = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(p1 * static_cast<double>(idx.size()))));
  idx.resize(k1);
  std::sort(idx.begin(), idx.end());
  std::stable_sort(idx.begin(), idx.end(), [&](Index a, Index b) { return e2(a) < e2(b); });
  const auto k2 = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(p2 * static_cast<double>(idx.size()))));
  idx.resize(k2);
  std::sort(idx.begin(), idx.end());
  return idx;
}

Outcome exact_identities() {
  std::vector<std::string> failures;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  };
  RngStream rng(6, 0);

  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double u = 10.0 * rng.normal();
    worst = std::max(worst, std::abs(rl::expectile_loss(Vector::Constant(1, u), 0.5) - 0.5 * u * u));
  }
  expect(worst <= 1e-12, fmt::format("expectile deviation {:.2e}", worst));

  worst = 0.0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    const auto b = small_bundle(100 + trial, 4);
    const Matrix tau = random_matrix(5, 24, rng);
    const energy::GuidanceWeights w{rng.uniform(0, 2), rng.uniform(0, 2), rng.uniform(0, 2)};
    const auto total = energy::weighted_energy(b, tau, w);
    const auto e1 = energy::domain_energy(b.domain, tau, 4);
    const auto e2 = energy::return_energy(b.ret, tau);
    const auto e3 = energy::policy_energy(b.policy, tau, 4);
    const Vector v = w.domain * e1.value + w.ret * e2.value + w.policy * e3.value;
    const Matrix g = w.domain * e1.grad + w.ret * e2.grad + w.policy * e3.grad;
    worst = std::max({worst, (total.value - v).cwiseAbs().maxCoeff(), (total.grad - g).cwiseAbs().maxCoeff()});
  }
  expect(worst <= 1e-9, fmt::format("energy linearity deviation {:.2e}", worst));

  worst = 0.0;
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    const auto b = small_bundle(200 + trial, 2);
    const Matrix tau = random_matrix(1, 12, rng);
    const env::State4 s = tau.block(0, 0, 1, 4).transpose();
    const env::Action2 a = tau.block(0, 4, 1, 2).transpose();
    const env::State4 sn = tau.block(0, 6, 1, 4).transpose();
    const double e1 = energy::domain_energy(b.domain, tau, 2).value(0);
    const double r = rng.normal(), eta = rng.uniform(0.01, 2.0);
    worst = std::max(worst, std::abs(energy::dara_augment(b.domain, s, a, sn, r, eta) - (r - eta * e1)));
  }
  expect(worst <= 1e-12, fmt::format("dara/E1 deviation {:.2e}", worst));

  {
    rl::IqlAgent agent(4, 2, 16, unit_normalizer(), 7);
    for (auto& [name, m] : agent.q_params) m = random_matrix(m.rows(), m.cols(), rng);
    const ParameterStore before = agent.q_target;
    agent.update_targets(0.005);
    worst = 0.0;
    for (const auto& [name, m] : agent.q_target)
      worst = std::max(worst, (m - (0.995 * before.at(name) + 0.005 * agent.q_params.at(name))).cwiseAbs().maxCoeff());
    expect(worst <= 1e-12, fmt::format("polyak deviation {:.2e}", worst));
  }

  {
    env::EnvParams p;
    p.kappa_grav = 2.0;
    const auto anchors = env::compute_anchors(p, 20, 3);
    expect(env::normalized_score(anchors.random_return, anchors.random_return, anchors.expert_return) == 0.0,
           "random anchor is not 0");
    expect(env::normalized_score(anchors.expert_return, anchors.random_return, anchors.expert_return) == 100.0,
           "expert anchor is not 100");
  }

  {
    const synth::FilterConfig fc{0.1, 0.5};
    for (int trial = 0; trial < 20; ++trial) {
      Vector e1(1000), e2(1000);
      const bool ties = trial % 2 == 1;
      for (Index i = 0; i < 1000; ++i) {
        e1(i) = ties ? static_cast<double>(rng.index(9)) : rng.normal();
        e2(i) = ties ? static_cast<double>(rng.index(9)) : rng.normal();
      }
      const auto kept = synth::filter_indices(e1, e2, fc);
      expect(kept.size() == 50, fmt::format("filter kept {}", kept.size()));
      expect(kept == synth::filter_indices(e1, e2, fc), "filter is not deterministic");
      expect(kept == reference_filter(e1, e2, 0.1, 0.5), "filter differs from the reference");
    }
  }

  std::string detail = "expectile, linearity, dara/E1, polyak, anchors, filter(50 of 1000)";
  for (const auto& f : failures) detail += "; " + f;
  return {failures.empty(), detail};
}

// ---------------------------------------------------------------- 7

Outcome conditioning() {
  diffusion::DenoiserArch arch;
  arch.horizon = 8;
  arch.hidden = 32;
  arch.embed_dim = 8;
  diffusion::Denoiser model(arch, 21);
  const auto schedule = diffusion::build_cosine_schedule(20);
  auto bundle = small_bundle(22, arch.horizon);
  const energy::GuidanceWeights weights{1.0, 1.0, 0.1};
  RngStream rng(7, 0);
  const Vector s_cur = random_matrix(4, 1, rng);

  sampler::SamplerConfig cfg;
  cfg.num_samples = 50;
  cfg.seed = 70;
  cfg.temperature = 0.5;
  cfg.rho = sampler::tilted_gaussian_rho(schedule, 1.0);
  long checks = 0, violations = 0;
  int calls = 0;
  auto observe = [&](int, const Matrix& tau) {
    ++calls;
    for (Index i = 0; i < tau.rows(); ++i) {
      ++checks;
      if (!(tau.row(i).head(4).transpose() == s_cur)) ++violations;
    }
  };
  const Matrix out = sampler::sample_trajectories(schedule, sampler::ema_denoiser(model),
                                                  sampler::energy_guidance(bundle, weights), cfg, arch.width(),
                                                  sampler::ConditionSpec{s_cur}, observe);
  for (Index i = 0; i < out.rows(); ++i) {
    ++checks;
    if (!(out.row(i).head(4).transpose() == s_cur)) ++violations;
  }

  // The planner's candidate set is conditioned on the normalized state.
  bundle.normalizer = env::Normalizer((Vector(4) << 0.1, -0.2, 0.0, 0.3).finished(),
                                      (Vector(4) << 0.5, 0.7, 1.1, 0.2).finished());
  planner::PlannerConfig pc;
  pc.candidates = 50;
  pc.weights = weights;
  pc.sampler = cfg;
  const env::State4 raw = bundle.normalizer.denormalize(env::State4(s_cur));
  const auto plan = planner::plan({model, schedule, bundle}, pc, raw, 71);
  const Vector s_norm = bundle.normalizer.normalize(raw);
  for (Index i = 0; i < plan.candidates.rows(); ++i) {
    ++checks;
    if (!(plan.candidates.row(i).head(4).transpose() == s_norm)) ++violations;
  }
  return {violations == 0 && calls == 21,
          fmt::format("50 guided chains, {} observed steps, {} row checks, {} violations", calls, checks, violations)};
}

}  // namespace

std::vector<Criterion> property_criteria() {
  return {{1, "gradient oracle", gradient_oracle},
          {2, "forward-noising moments", forward_moments},
          {3, "zero-guidance reduction", zero_guidance_reduction},
          {4, "tilted-Gaussian sampling", tilted_gaussian},
          {5, "density-ratio recovery", density_ratio},
          {6, "exact identities", exact_identities},
          {7, "conditioning", conditioning}};
}

}  // namespace cedge::acceptance
