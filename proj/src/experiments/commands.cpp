#include "cedge/experiments/commands.hpp"

#include "cedge/core/io.hpp"
#include "cedge/experiments/artifacts.hpp"
#include "cedge/experiments/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <ostream>

namespace fs = std::filesystem;

namespace cedge::experiments {

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names = {"collect-data", "train-diffusion", "train-energy",
                                                 "plan",         "generate",        "filter",
                                                 "train-policy", "evaluate",        "report"};
  return names;
}

std::string usage(const std::string& program) {
  std::string out = fmt::format(
      "usage: {} <subcommand> --config <path> [--seed <int>] [--out <dir>] [--set key=value ...]\n\nsubcommands:\n",
      program);
  for (const auto& n : subcommand_names()) out += "  " + n + "\n";
  return out;
}

RunPaths::RunPaths(const ExperimentConfig& config)
    : run(config.output_dir()),
      root(run / fmt::format("seed-{}", config.seed())),
      shift(root / "shifts" / config.shift().name()) {}

fs::path sidecar_path(const fs::path& csv) {
  fs::path p = csv;
  return p.replace_extension(".meta.json");
}

ExperimentConfig resolve_config(const CommandOptions& options) {
  if (options.config_path.empty()) throw ConfigError("--config is required");
  ExperimentConfig cfg = ExperimentConfig::load(options.config_path, options.overrides);
  if (options.seed) cfg.set("seed", json(*options.seed));
  if (options.out) cfg.set("output_dir", json(*options.out));
  return cfg;
}

namespace {

constexpr const char* kEnvName = "pointmass";

struct Context {
  const ExperimentConfig& cfg;
  RunPaths paths;
  std::ostream& log;
  std::string hash;
  std::uint64_t seed;
  std::string run_id;

  Context(const ExperimentConfig& c, std::ostream& l)
      : cfg(c), paths(c), log(l), hash(c.hash()), seed(c.seed()),
        run_id(fmt::format("seed-{}/{}", c.seed(), c.shift().name())) {}

  Provenance prov() const { return {hash, seed}; }
  std::uint64_t sub_seed(const std::string& label) const { return mix_seed(seed, stream_id(label)); }
  std::uint64_t eval_seed() const { return sub_seed("evaluation"); }
  MetricsLog metrics(const fs::path& path) const { return MetricsLog(path.string(), run_id, seed); }
};

void require(const fs::path& path, const std::string& what, const std::string& producer) {
  if (!fs::exists(path))
    throw MissingArtifact(fmt::format("missing {} at {}; run {} first", what, path.string(), producer));
}

void write_sidecar(const Context& ctx, const fs::path& csv, json meta) {
  meta["config_hash"] = ctx.hash;
  meta["seed"] = ctx.seed;
  atomic_write(sidecar_path(csv).string(), dump_json(meta, 1) + "\n");
}

void write_dataset(const Context& ctx, const fs::path& path, const env::OfflineDataset& data, json meta) {
  env::save_csv(path.string(), data);
  meta["transitions"] = data.size();
  meta["episodes"] = data.episodes().size();
  write_sidecar(ctx, path, std::move(meta));
}

env::OfflineDataset read_dataset(const fs::path& path, env::Domain domain, const std::string& producer) {
  require(path, "dataset", producer);
  return env::load_csv(path.string(), domain);
}

Checkpoint read_checkpoint(const Context& ctx, const fs::path& path, const std::string& kind,
                           const std::string& producer) {
  require(path, kind + " checkpoint", producer);
  Checkpoint ckpt = load_checkpoint(path.string(), kind);
  if (ckpt.config_hash != ctx.hash) {
    ctx.log << "warning: " << path.string() << " was written under config " << ckpt.config_hash.substr(0, 12)
            << ", current config is " << ctx.hash.substr(0, 12) << "\n";
    ctx.metrics(ctx.paths.root_metrics("warnings"))
        .write({{"phase", "load"},
                {"warning", "config hash mismatch"},
                {"checkpoint", path.string()},
                {"checkpoint_hash", ckpt.config_hash},
                {"config_hash", ctx.hash}});
  }
  return ckpt;
}

// Every `stride`-th value plus the last one.
void log_curve(MetricsLog& log, const std::string& phase, const std::string& metric, const std::vector<double>& v) {
  const std::size_t stride = std::max<std::size_t>(1, v.size() / 500);
  for (std::size_t i = 0; i < v.size(); ++i)
    if ((i + 1) % stride == 0 || i + 1 == v.size()) log.scalar(phase, static_cast<long>(i + 1), metric, v[i]);
}

void write_evaluation(const Context& ctx, const std::string& arm, const env::ScoreStats& stats) {
  auto log = ctx.metrics(ctx.paths.metrics("evaluation"));
  const auto shift = ctx.cfg.shift();
  for (std::size_t s = 0; s < stats.seeds.size(); ++s) {
    for (std::size_t e = 0; e < stats.scores[s].size(); ++e) {
      log.write({{"phase", "evaluate"},
                 {"env", kEnvName},
                 {"shift_type", shift.type},
                 {"level", shift.level},
                 {"arm", arm},
                 {"eval_seed", stats.seeds[s]},
                 {"episode", static_cast<long>(e)},
                 {"return", stats.raw_returns[s][e]},
                 {"score", stats.scores[s][e]}});
    }
  }
  ctx.log << fmt::format("{:<24} normalized score {:8.2f}\n", arm, stats.mean);
}

env::ScoreAnchors anchors_for(const Context& ctx) {
  return env::compute_anchors(ctx.cfg.target_env(), ctx.cfg.anchor_episodes(), stream_id("anchors"));
}

void collect_data(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto source = env::collect_dataset(cfg.source_env(), cfg.source_policy(),
                                           static_cast<std::size_t>(cfg.source_size()), ctx.sub_seed("data.source"),
                                           env::Domain::kSource);
  write_dataset(ctx, ctx.paths.source_data(), source,
                {{"kind", "dataset"}, {"domain", "source"}, {"policy", env::policy_name(cfg.source_policy())}});
  const auto target = env::collect_dataset(cfg.target_env(), cfg.target_policy(),
                                           static_cast<std::size_t>(cfg.target_size()),
                                           ctx.sub_seed("data.target." + cfg.shift().name()), env::Domain::kTarget);
  write_dataset(ctx, ctx.paths.target_data(), target,
                {{"kind", "dataset"},
                 {"domain", "target"},
                 {"shift", cfg.shift().name()},
                 {"policy", env::policy_name(cfg.target_policy())}});
  ctx.log << fmt::format("collected {} source and {} target transitions\n", source.size(), target.size());
}

void train_diffusion(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto source = read_dataset(ctx.paths.source_data(), env::Domain::kSource, "collect-data");
  const env::Normalizer normalizer = env::Normalizer::fit(source);
  const auto arch = cfg.denoiser_arch();
  env::SegmentSet segments = env::extract_segments(source, normalizer, arch.horizon);
  const bool on_union = cfg.diffusion_dataset() == "union";
  if (on_union) {
    const auto target = read_dataset(ctx.paths.target_data(), env::Domain::kTarget, "collect-data");
    segments.append(env::extract_segments(target, normalizer, arch.horizon));
  }
  if (segments.size() == 0) throw ConfigError("no segments: episodes are shorter than the diffusion horizon");

  diffusion::Denoiser model(arch, ctx.sub_seed("diffusion.init"));
  const auto schedule = diffusion::build_cosine_schedule<double>(cfg.diffusion_steps());
  const auto train = cfg.diffusion_train(ctx.sub_seed("diffusion.train"));
  Adam adam(train.adam);
  std::vector<double> losses;
  diffusion::train_denoiser(model, segments.data, schedule, train, &losses, &adam);

  const fs::path out = on_union ? ctx.paths.union_diffusion() : ctx.paths.diffusion();
  save_checkpoint(out.string(), denoiser_checkpoint(model, schedule, normalizer, &adam, ctx.prov()));
  auto log = ctx.metrics(on_union ? ctx.paths.metrics("diffusion-union") : ctx.paths.root_metrics("diffusion"));
  log_curve(log, "train-diffusion", "denoising_loss", losses);
  ctx.log << fmt::format("trained denoiser on {} segments, final loss {:.5f}\n", segments.size(),
                         losses.empty() ? 0.0 : losses.back());
}

void train_energy(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto source = read_dataset(ctx.paths.source_data(), env::Domain::kSource, "collect-data");
  const auto target = read_dataset(ctx.paths.target_data(), env::Domain::kTarget, "collect-data");
  const env::Normalizer normalizer = env::Normalizer::fit(source);
  const auto src = env::make_transition_batch(source, &normalizer);
  const auto trg = env::make_transition_batch(target, &normalizer);
  const Index H = cfg.denoiser_arch().horizon;
  auto log = ctx.metrics(ctx.paths.metrics("energy"));

  EnergyArtifact art;
  auto& b = art.bundle;
  b.horizon = H;
  b.normalizer = normalizer;
  b.weights = cfg.guidance_weights();

  std::vector<double> losses;
  b.domain = energy::train_domain_classifiers(src, trg, cfg.energy_train(ctx.sub_seed("energy.domain")), &losses);
  log_curve(log, "train-energy", "domain_classifier_loss", losses);

  env::SegmentSet segments = env::extract_segments(source, normalizer, H);
  segments.append(env::extract_segments(target, normalizer, H));
  const auto ret_cfg = cfg.energy_train(ctx.sub_seed("energy.return"));
  b.ret = energy::ReturnPredictor(cfg.return_arch(), H, segments.transition_dim(), ret_cfg.hidden,
                                  cfg.return_channels(), cfg.energy_gamma(), ret_cfg.seed);
  losses.clear();
  energy::train_return_predictor(b.ret, segments, ret_cfg, &losses);
  log_curve(log, "train-energy", "return_loss", losses);

  const auto pol_cfg = cfg.energy_train(ctx.sub_seed("energy.policy"));
  b.policy = energy::BehaviorPolicyModel(env::kStateDim, env::kActionDim, pol_cfg.hidden, pol_cfg.seed);
  losses.clear();
  energy::train_behavior_policy(b.policy, src.s, src.a, pol_cfg, &losses);
  log_curve(log, "train-energy", "behavior_nll", losses);

  const auto rew_cfg = cfg.energy_train(ctx.sub_seed("energy.reward"));
  art.annotator = energy::RewardAnnotator(env::kStateDim, env::kActionDim, rew_cfg.hidden, rew_cfg.seed);
  losses.clear();
  energy::train_reward_annotator(art.annotator, env::TransitionBatch::concat(src, trg), rew_cfg, &losses);
  log_curve(log, "train-energy", "reward_loss", losses);

  save_checkpoint(ctx.paths.energy().string(), energy_checkpoint(art, ctx.prov()));
  ctx.log << "trained domain classifiers, return predictor, behavior policy and reward annotator\n";
}

struct Models {
  DiffusionArtifact diffusion;
  EnergyArtifact energy;
};

void require_same_normalizer(const env::Normalizer& a, const env::Normalizer& b) {
  if (a.mean() != b.mean() || a.std() != b.std())
    throw ConfigError("diffusion and energy checkpoints were trained with different state normalizers");
}

Models load_models(const Context& ctx, const fs::path& diffusion_path, const std::string& command) {
  const std::string producer = diffusion_path == ctx.paths.diffusion() ? "train-diffusion"
                                                                        : "train-diffusion with diffusion.dataset=union";
  // Both are checked before loading so the error names everything missing.
  if (!fs::exists(diffusion_path) && !fs::exists(ctx.paths.energy()))
    throw MissingArtifact(fmt::format("{} needs {} and {}; run {} and train-energy first", command,
                                      diffusion_path.string(), ctx.paths.energy().string(), producer));
  Models m{restore_denoiser(read_checkpoint(ctx, diffusion_path, "diffusion", producer)),
           restore_energy(read_checkpoint(ctx, ctx.paths.energy(), "energy", "train-energy"))};
  require_same_normalizer(m.diffusion.normalizer, m.energy.bundle.normalizer);
  if (m.diffusion.model.arch().horizon != m.energy.bundle.horizon)
    throw ConfigError("diffusion and energy checkpoints use different horizons");
  return m;
}

void plan(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto arms = cfg.planner_arms();
  const bool want_cedge = std::find(arms.begin(), arms.end(), "cedge-planner") != arms.end();
  const bool want_baseline = std::find(arms.begin(), arms.end(), "diffuser-planner") != arms.end();
  Models models = load_models(ctx, ctx.paths.diffusion(), "plan");
  const auto anchors = anchors_for(ctx);
  const auto target_env = cfg.target_env();
  const int T = models.diffusion.schedule.steps();
  const std::vector<std::uint64_t> seeds{ctx.eval_seed()};

  auto run_arm = [&](const std::string& arm, const Models& m, const energy::GuidanceWeights& w) {
    planner::PlannerConfig pc = cfg.planner(T);
    pc.weights = w;
    const planner::PlannerModels pm{m.diffusion.model, m.diffusion.schedule, m.energy.bundle};
    write_evaluation(ctx, arm, planner::evaluate_planner(target_env, pm, pc, anchors, seeds));
  };

  if (want_cedge) run_arm("cedge-planner", models, cfg.guidance_weights());
  for (const auto& w : cfg.guidance_sweep())
    run_arm(fmt::format("cedge-planner[{},{},{}]", w.domain, w.ret, w.policy), models, w);
  if (want_baseline) {
    if (cfg.baseline_denoiser() == "union") {
      Models u{restore_denoiser(read_checkpoint(ctx, ctx.paths.union_diffusion(), "diffusion",
                                                "train-diffusion with diffusion.dataset=union")),
               models.energy};
      require_same_normalizer(u.diffusion.normalizer, u.energy.bundle.normalizer);
      run_arm("diffuser-planner", u, {0.0, 0.0, 0.0});
    } else {
      run_arm("diffuser-planner", models, {0.0, 0.0, 0.0});
    }
  }
}

void generate(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  Models models = load_models(ctx, ctx.paths.diffusion(), "generate");
  sampler::SamplerConfig sc = cfg.sampler(models.diffusion.schedule.steps());
  sc.temperature = cfg.generation_temperature();
  const synth::GenerationModels gm{models.diffusion.model, models.diffusion.schedule, models.energy.bundle};
  auto segments = synth::generate_synthetic(gm, sc, cfg.guidance_weights(), cfg.generation_budget(),
                                            ctx.sub_seed("generate"));
  const synth::SyntheticSet set = synth::score_segments(models.energy.bundle, std::move(segments));
  const json doc = {{"format_version", Checkpoint::kFormatVersion},
                    {"kind", "generated"},
                    {"config_hash", ctx.hash},
                    {"seed", ctx.seed},
                    {"horizon", set.segments.horizon},
                    {"state_dim", set.segments.state_dim},
                    {"action_dim", set.segments.action_dim},
                    {"segments", matrix_to_json(set.segments.data)},
                    {"domain_energy", std::vector<double>(set.domain_energy.begin(), set.domain_energy.end())},
                    {"return_energy", std::vector<double>(set.return_energy.begin(), set.return_energy.end())}};
  atomic_write(ctx.paths.generated().string(), dump_json(doc) + "\n");
  auto log = ctx.metrics(ctx.paths.metrics("generate"));
  log.write({{"phase", "generate"},
             {"segments", set.size()},
             {"mean_domain_energy", set.domain_energy.mean()},
             {"mean_return_energy", set.return_energy.mean()}});
  ctx.log << fmt::format("generated {} segments\n", set.size());
}

synth::SyntheticSet read_generated(const Context& ctx) {
  const fs::path path = ctx.paths.generated();
  require(path, "generated segments", "generate");
  const json doc = parse_json(read_file(path.string()), path.string());
  synth::SyntheticSet set;
  try {
    if (doc.at("format_version").get<int>() != Checkpoint::kFormatVersion)
      throw FormatError(path.string() + ": unsupported format version");
    set.seed = doc.at("seed").get<std::uint64_t>();
    set.config_hash = doc.at("config_hash").get<std::string>();
    set.segments.horizon = doc.at("horizon").get<Index>();
    set.segments.state_dim = doc.at("state_dim").get<Index>();
    set.segments.action_dim = doc.at("action_dim").get<Index>();
    set.segments.data = matrix_from_json(doc.at("segments"));
    const auto e1 = doc.at("domain_energy").get<std::vector<double>>();
    const auto e2 = doc.at("return_energy").get<std::vector<double>>();
    set.domain_energy = Eigen::Map<const Vector>(e1.data(), static_cast<Index>(e1.size()));
    set.return_energy = Eigen::Map<const Vector>(e2.data(), static_cast<Index>(e2.size()));
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": malformed generated set: " + e.what());
  }
  set.source_index.resize(static_cast<std::size_t>(set.size()));
  for (Index i = 0; i < set.size(); ++i) set.source_index[static_cast<std::size_t>(i)] = i;
  return set;
}

void filter(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const synth::SyntheticSet set = read_generated(ctx);
  const auto target = read_dataset(ctx.paths.target_data(), env::Domain::kTarget, "collect-data");
  const EnergyArtifact art = restore_energy(read_checkpoint(ctx, ctx.paths.energy(), "energy", "train-energy"));
  const auto fc = cfg.filter();
  const synth::SyntheticSet kept = synth::filter_trajectories(set, fc);
  const auto buffers = synth::assemble_training_set(kept, art.annotator, art.bundle.normalizer, target);
  write_dataset(ctx, ctx.paths.synthetic_data(), buffers.synthetic,
                {{"kind", "synthetic"},
                 {"domain_ratio", fc.domain_ratio},
                 {"return_ratio", fc.return_ratio},
                 {"generated", set.size()},
                 {"retained", kept.source_index},
                 {"domain_energy", std::vector<double>(kept.domain_energy.begin(), kept.domain_energy.end())},
                 {"return_energy", std::vector<double>(kept.return_energy.begin(), kept.return_energy.end())}});
  ctx.log << fmt::format("kept {} of {} segments ({} transitions)\n", kept.size(), set.size(),
                         buffers.synthetic.size());
}

void train_policy(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto target = read_dataset(ctx.paths.target_data(), env::Domain::kTarget, "collect-data");
  const auto anchors = anchors_for(ctx);
  for (const auto& arm : cfg.iql_arms()) {
    env::OfflineDataset extra(env::Domain::kTarget);
    if (arm == "iql-syn-trg") {
      extra = read_dataset(ctx.paths.synthetic_data(), env::Domain::kTarget, "filter");
    } else if (arm == "iql-src-trg") {
      extra = read_dataset(ctx.paths.source_data(), env::Domain::kSource, "collect-data");
    } else if (arm == "iql-dara") {
      extra = read_dataset(ctx.paths.source_data(), env::Domain::kSource, "collect-data");
      const EnergyArtifact art = restore_energy(read_checkpoint(ctx, ctx.paths.energy(), "energy", "train-energy"));
      const auto batch = env::make_transition_batch(extra, &art.bundle.normalizer);
      const Vector r = energy::dara_augment(art.bundle.domain, batch, cfg.dara_eta());
      for (std::size_t i = 0; i < extra.size(); ++i) extra[i].r = r(static_cast<Index>(i));
    }
    const rl::IqlConfig ic = cfg.iql(ctx.sub_seed("iql"));
    auto log = ctx.metrics(ctx.paths.metrics(arm));
    const long stride = std::max<long>(1, ic.steps / 500);
    rl::IqlHooks hooks;
    hooks.record = [&](const rl::IqlRecord& r) {
      if (r.step % stride != 0 && r.step != ic.steps && std::isnan(r.eval_score)) return;
      log.scalar("train-policy", r.step, "value_loss", r.value_loss);
      log.scalar("train-policy", r.step, "q_loss", r.q_loss);
      log.scalar("train-policy", r.step, "policy_loss", r.policy_loss);
      if (!std::isnan(r.eval_score)) log.scalar("train-policy", r.step, "eval_score", r.eval_score);
    };
    hooks.evaluate = [&](const rl::IqlAgent& agent) {
      return rl::evaluate_policy(cfg.target_env(), agent, anchors, cfg.eval_episodes(), {ctx.eval_seed()}).mean;
    };
    hooks.checkpoint = [&](long step, const rl::IqlAgent& agent) {
      const fs::path p = ctx.paths.shift / "checkpoints" / fmt::format("{}-step{}.json", arm, step);
      save_checkpoint(p.string(), iql_checkpoint(agent, arm, ctx.prov()));
    };
    const rl::IqlAgent agent = rl::train_iql(extra, target, ic, nullptr, hooks);
    save_checkpoint(ctx.paths.policy(arm).string(), iql_checkpoint(agent, arm, ctx.prov()));
    ctx.log << fmt::format("trained {} on {} + {} transitions\n", arm, extra.size(), target.size());
  }
}

void evaluate(const Context& ctx) {
  const auto& cfg = ctx.cfg;
  const auto anchors = anchors_for(ctx);
  for (const auto& arm : cfg.iql_arms()) {
    const rl::IqlAgent agent = restore_iql(read_checkpoint(ctx, ctx.paths.policy(arm), "iql", "train-policy"));
    write_evaluation(ctx, arm,
                     rl::evaluate_policy(cfg.target_env(), agent, anchors, cfg.eval_episodes(), {ctx.eval_seed()}));
  }
}

void report(const Context& ctx) {
  const auto out = write_report(ctx.paths.run.string());
  ctx.log << "wrote " << out.summary_path << " and " << out.plots.size() << " plots\n";
  for (const auto& row : out.rows)
    ctx.log << fmt::format("{} {} {} {:<24} {:8.2f} ± {:.2f} ({} seeds)\n", row.env, row.shift_type,
                           format_double(row.level), row.arm, row.mean, row.std, row.seeds);
}

}  // namespace

void execute_subcommand(const std::string& name, const ExperimentConfig& config, std::ostream& log) {
  const Context ctx(config, log);
  const auto start = std::chrono::steady_clock::now();
  if (name == "collect-data") collect_data(ctx);
  else if (name == "train-diffusion") train_diffusion(ctx);
  else if (name == "train-energy") train_energy(ctx);
  else if (name == "plan") plan(ctx);
  else if (name == "generate") generate(ctx);
  else if (name == "filter") filter(ctx);
  else if (name == "train-policy") train_policy(ctx);
  else if (name == "evaluate") evaluate(ctx);
  else if (name == "report") report(ctx);
  else throw UsageError("unknown subcommand '" + name + "'");
  if (name == "report") return;
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ctx.metrics(ctx.paths.timings()).write({{"phase", name}, {"shift", config.shift().name()}, {"seconds", seconds}});
}

int run_subcommand(const std::string& name, const CommandOptions& options, std::ostream& out, std::ostream& err,
                   const std::string& program) {
  const auto& names = subcommand_names();
  if (std::find(names.begin(), names.end(), name) == names.end()) {
    err << "unknown subcommand '" << name << "'\n" << usage(program);
    return 2;
  }
  try {
    execute_subcommand(name, resolve_config(options), out);
    return 0;
  } catch (const std::exception& e) {
    err << program << " " << name << ": " << e.what() << "\n";
    return 1;
  }
}

}  // namespace cedge::experiments
