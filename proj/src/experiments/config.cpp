#include "cedge/experiments/config.hpp"

#include "cedge/core/io.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>

namespace cedge::experiments {

const json& default_config() {
  static const json defaults = json::parse(R"({
    "output_dir": "runs/cedge",
    "seed": 0,
    "env": {
      "source": {
        "kappa_grav": 1.0, "kappa_fric": 1.0, "dt": 0.1, "g0": 1.0, "mu0": 1.5,
        "u_max": 4.0, "noise_std": 0.05, "goal": [0.0, 0.0], "episode_len": 50
      },
      "shift": {"type": "gravity", "level": 2.0}
    },
    "data": {
      "source_size": 100000, "target_size": 5000,
      "source_policy": "medium", "target_policy": "medium"
    },
    "diffusion": {
      "denoiser": "dense", "horizon": 8, "hidden": 256, "embed_dim": 32,
      "channels": 32, "kernel": 5, "steps": 20, "train_steps": 50000, "batch": 64,
      "lr": 2e-4, "weight_decay": 1e-5, "ema_decay": 0.9999, "cosine_lr": true,
      "dataset": "source"
    },
    "energy": {
      "hidden": 256, "train_steps": 20000, "batch": 64, "lr": 2e-4, "weight_decay": 1e-4,
      "return_arch": "conv", "return_channels": 32, "gamma": 0.99,
      "weights": {"domain": 1.0, "ret": 1.0, "policy": 0.1},
      "sweep": [], "dara_eta": 0.1
    },
    "sampler": {
      "temperature": 0.5, "rho": 1.0, "rho_schedule": "constant", "rho_v0": 1.0,
      "rho_per_step": [], "chunk": 0
    },
    "planner": {
      "candidates": 64, "action_low": -1.0, "action_high": 1.0,
      "arms": ["cedge-planner", "diffuser-planner"], "baseline_denoiser": "source"
    },
    "pipeline": {"budget": 50000, "temperature": 1.0, "domain_ratio": 0.1, "return_ratio": 0.5},
    "iql": {
      "expectile": 0.7, "beta": 3.0, "gamma": 0.99, "polyak": 0.005, "lr": 3e-4,
      "weight_clip": 100.0, "batch_per_buffer": 128, "hidden": 256, "steps": 100000,
      "timeout_terminal": false, "eval_every": 0, "checkpoint_every": 0,
      "arms": ["iql-syn-trg", "iql-trg", "iql-src-trg", "iql-dara"]
    },
    "evaluation": {"episodes": 10, "anchor_episodes": 100}
  })");
  return defaults;
}

std::string ShiftSpec::name() const {
  if (type == "none") return "none";
  return fmt::format("{}-{}", type, level);
}

namespace {

bool compatible(const json& def, const json& value) {
  if (def.is_number()) return value.is_number();
  return def.type() == value.type();
}

const char* type_label(const json& def) {
  if (def.is_number()) return "a number";
  if (def.is_boolean()) return "a boolean";
  if (def.is_string()) return "a string";
  if (def.is_array()) return "an array";
  return "an object";
}

void merge(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError("config " + (path.empty() ? std::string("root") : "'" + path + "'") +
                                           " must be an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!base.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
    json& slot = base[it.key()];
    if (slot.is_object()) {
      merge(slot, it.value(), key);
    } else {
      if (!compatible(slot, it.value()))
        throw ConfigError("config key '" + key + "' must be " + type_label(slot));
      slot = it.value();
    }
  }
}

}  // namespace

ExperimentConfig::ExperimentConfig() : doc_(default_config()) { validate(); }

ExperimentConfig::ExperimentConfig(const json& doc) : doc_(default_config()) {
  merge(doc_, doc, "");
  validate();
}

ExperimentConfig ExperimentConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(fmt::format("config {}: parse error at byte {}: {}", path, e.byte, e.what()));
  }
  ExperimentConfig cfg(doc);
  for (const auto& o : overrides) cfg.set(o);
  return cfg;
}

void ExperimentConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  set(key, value);
}

void ExperimentConfig::set(const std::string& key, const json& value) {
  json patch = value;
  std::string rest = key;
  std::vector<std::string> parts;
  for (std::size_t pos; (pos = rest.find('.')) != std::string::npos; rest = rest.substr(pos + 1))
    parts.push_back(rest.substr(0, pos));
  parts.push_back(rest);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) patch = json{{*it, patch}};
  json next = doc_;
  merge(next, patch, "");
  std::swap(doc_, next);
  try {
    validate();
  } catch (...) {
    std::swap(doc_, next);
    throw;
  }
}

const json& ExperimentConfig::at(const std::string& dotted) const {
  const json* node = &doc_;
  std::string rest = dotted;
  while (true) {
    const auto pos = rest.find('.');
    const std::string head = rest.substr(0, pos);
    if (!node->contains(head)) throw ConfigError("missing config key '" + dotted + "'");
    node = &(*node)[head];
    if (pos == std::string::npos) return *node;
    rest = rest.substr(pos + 1);
  }
}

namespace {

double as_double(const json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError("config key '" + key + "' must be a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) throw ConfigError("config key '" + key + "' must be finite");
  return v;
}

long as_long(const json& j, const std::string& key) {
  const double v = as_double(j, key);
  if (v != std::floor(v)) throw ConfigError("config key '" + key + "' must be an integer");
  return static_cast<long>(v);
}

}  // namespace

#define CEDGE_NUM(key) as_double(at(key), key)
#define CEDGE_INT(key) as_long(at(key), key)
#define CEDGE_STR(key) at(key).get<std::string>()

std::uint64_t ExperimentConfig::seed() const {
  const long s = CEDGE_INT("seed");
  if (s < 0) throw ConfigError("config key 'seed' must be >= 0");
  return static_cast<std::uint64_t>(s);
}

std::string ExperimentConfig::output_dir() const { return CEDGE_STR("output_dir"); }

env::EnvParams ExperimentConfig::source_env() const {
  env::EnvParams p;
  p.kappa_grav = CEDGE_NUM("env.source.kappa_grav");
  p.kappa_fric = CEDGE_NUM("env.source.kappa_fric");
  p.dt = CEDGE_NUM("env.source.dt");
  p.g0 = CEDGE_NUM("env.source.g0");
  p.mu0 = CEDGE_NUM("env.source.mu0");
  p.u_max = CEDGE_NUM("env.source.u_max");
  p.noise_std = CEDGE_NUM("env.source.noise_std");
  const json& goal = at("env.source.goal");
  if (goal.size() != 2) throw ConfigError("config key 'env.source.goal' must have 2 entries");
  p.goal = {as_double(goal[0], "env.source.goal"), as_double(goal[1], "env.source.goal")};
  p.episode_len = static_cast<int>(CEDGE_INT("env.source.episode_len"));
  return p;
}

ShiftSpec ExperimentConfig::shift() const { return {CEDGE_STR("env.shift.type"), CEDGE_NUM("env.shift.level")}; }

env::EnvParams ExperimentConfig::target_env() const {
  env::EnvParams p = source_env();
  const ShiftSpec s = shift();
  if (s.type == "gravity") {
    p.kappa_grav = s.level;
  } else if (s.type == "friction") {
    p.kappa_fric = s.level;
  } else if (s.type != "none") {
    throw ConfigError("config key 'env.shift.type' must be gravity, friction or none");
  }
  return p;
}

env::BehaviorPolicy ExperimentConfig::source_policy() const { return env::parse_policy(CEDGE_STR("data.source_policy")); }
env::BehaviorPolicy ExperimentConfig::target_policy() const { return env::parse_policy(CEDGE_STR("data.target_policy")); }
long ExperimentConfig::source_size() const { return CEDGE_INT("data.source_size"); }
long ExperimentConfig::target_size() const { return CEDGE_INT("data.target_size"); }

diffusion::DenoiserArch ExperimentConfig::denoiser_arch() const {
  diffusion::DenoiserArch a;
  a.kind = diffusion::parse_denoiser_kind(CEDGE_STR("diffusion.denoiser"));
  a.horizon = CEDGE_INT("diffusion.horizon");
  a.hidden = CEDGE_INT("diffusion.hidden");
  a.embed_dim = CEDGE_INT("diffusion.embed_dim");
  a.channels = CEDGE_INT("diffusion.channels");
  a.kernel = CEDGE_INT("diffusion.kernel");
  return a;
}

int ExperimentConfig::diffusion_steps() const { return static_cast<int>(CEDGE_INT("diffusion.steps")); }

diffusion::DiffusionTrainConfig ExperimentConfig::diffusion_train(std::uint64_t seed) const {
  diffusion::DiffusionTrainConfig c;
  c.steps = CEDGE_INT("diffusion.train_steps");
  c.batch = CEDGE_INT("diffusion.batch");
  c.adam.lr = CEDGE_NUM("diffusion.lr");
  c.adam.weight_decay = CEDGE_NUM("diffusion.weight_decay");
  c.ema_decay = CEDGE_NUM("diffusion.ema_decay");
  c.cosine_lr = at("diffusion.cosine_lr").get<bool>();
  c.seed = seed;
  return c;
}

std::string ExperimentConfig::diffusion_dataset() const { return CEDGE_STR("diffusion.dataset"); }

energy::TrainConfig ExperimentConfig::energy_train(std::uint64_t seed) const {
  energy::TrainConfig c;
  c.steps = CEDGE_INT("energy.train_steps");
  c.batch = CEDGE_INT("energy.batch");
  c.hidden = CEDGE_INT("energy.hidden");
  c.adam.lr = CEDGE_NUM("energy.lr");
  c.adam.weight_decay = CEDGE_NUM("energy.weight_decay");
  c.seed = seed;
  return c;
}

energy::ReturnArch ExperimentConfig::return_arch() const { return energy::parse_return_arch(CEDGE_STR("energy.return_arch")); }
Index ExperimentConfig::return_channels() const { return CEDGE_INT("energy.return_channels"); }
double ExperimentConfig::energy_gamma() const { return CEDGE_NUM("energy.gamma"); }

energy::GuidanceWeights ExperimentConfig::guidance_weights() const {
  return {CEDGE_NUM("energy.weights.domain"), CEDGE_NUM("energy.weights.ret"), CEDGE_NUM("energy.weights.policy")};
}

std::vector<energy::GuidanceWeights> ExperimentConfig::guidance_sweep() const {
  std::vector<energy::GuidanceWeights> out;
  for (const auto& entry : at("energy.sweep")) {
    if (!entry.is_array() || entry.size() != 3)
      throw ConfigError("config key 'energy.sweep' entries must be [domain, ret, policy] triples");
    out.push_back({as_double(entry[0], "energy.sweep"), as_double(entry[1], "energy.sweep"),
                   as_double(entry[2], "energy.sweep")});
  }
  return out;
}

double ExperimentConfig::dara_eta() const { return CEDGE_NUM("energy.dara_eta"); }

sampler::SamplerConfig ExperimentConfig::sampler(int steps) const {
  sampler::SamplerConfig c;
  c.temperature = CEDGE_NUM("sampler.temperature");
  c.rho_constant = CEDGE_NUM("sampler.rho");
  for (const auto& r : at("sampler.rho_per_step")) c.rho.push_back(as_double(r, "sampler.rho_per_step"));
  const std::string shape = at("sampler.rho_schedule").get<std::string>();
  if (shape == "tilted") {
    // rho scales the tilted-Gaussian shape; an explicit per-step list wins.
    if (c.rho.empty()) {
      const double v0 = CEDGE_NUM("sampler.rho_v0");
      if (!(v0 > 0.0)) throw ConfigError("config key 'sampler.rho_v0' must be positive");
      c.rho = sampler::tilted_gaussian_rho(diffusion::build_cosine_schedule(steps), v0);
      for (double& r : c.rho) r *= c.rho_constant;
    }
  } else if (shape != "constant") {
    throw ConfigError("config key 'sampler.rho_schedule' must be constant or tilted");
  }
  c.chunk = CEDGE_INT("sampler.chunk");
  c.validate(steps);
  return c;
}

planner::PlannerConfig ExperimentConfig::planner(int steps) const {
  planner::PlannerConfig c;
  c.candidates = static_cast<int>(CEDGE_INT("planner.candidates"));
  c.sampler = sampler(steps);
  c.weights = guidance_weights();
  c.action_low = CEDGE_NUM("planner.action_low");
  c.action_high = CEDGE_NUM("planner.action_high");
  c.episodes = eval_episodes();
  return c;
}

namespace {

std::vector<std::string> strings(const json& arr, const std::string& key) {
  std::vector<std::string> out;
  for (const auto& v : arr) {
    if (!v.is_string()) throw ConfigError("config key '" + key + "' must list strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

void require_members(const std::vector<std::string>& values, const std::vector<std::string>& allowed,
                     const std::string& key) {
  for (const auto& v : values)
    if (std::find(allowed.begin(), allowed.end(), v) == allowed.end())
      throw ConfigError("config key '" + key + "' has unknown entry '" + v + "'");
}

}  // namespace

std::vector<std::string> ExperimentConfig::planner_arms() const { return strings(at("planner.arms"), "planner.arms"); }
std::string ExperimentConfig::baseline_denoiser() const { return CEDGE_STR("planner.baseline_denoiser"); }

long ExperimentConfig::generation_budget() const { return CEDGE_INT("pipeline.budget"); }
double ExperimentConfig::generation_temperature() const { return CEDGE_NUM("pipeline.temperature"); }
synth::FilterConfig ExperimentConfig::filter() const {
  return {CEDGE_NUM("pipeline.domain_ratio"), CEDGE_NUM("pipeline.return_ratio")};
}

rl::IqlConfig ExperimentConfig::iql(std::uint64_t seed) const {
  rl::IqlConfig c;
  c.expectile = CEDGE_NUM("iql.expectile");
  c.beta = CEDGE_NUM("iql.beta");
  c.gamma = CEDGE_NUM("iql.gamma");
  c.polyak = CEDGE_NUM("iql.polyak");
  c.lr = CEDGE_NUM("iql.lr");
  c.weight_clip = CEDGE_NUM("iql.weight_clip");
  c.batch_per_buffer = CEDGE_INT("iql.batch_per_buffer");
  c.hidden = CEDGE_INT("iql.hidden");
  c.steps = CEDGE_INT("iql.steps");
  c.timeout_terminal = at("iql.timeout_terminal").get<bool>();
  c.eval_every = CEDGE_INT("iql.eval_every");
  c.checkpoint_every = CEDGE_INT("iql.checkpoint_every");
  c.seed = seed;
  return c;
}

std::vector<std::string> ExperimentConfig::iql_arms() const { return strings(at("iql.arms"), "iql.arms"); }

int ExperimentConfig::eval_episodes() const { return static_cast<int>(CEDGE_INT("evaluation.episodes")); }
int ExperimentConfig::anchor_episodes() const { return static_cast<int>(CEDGE_INT("evaluation.anchor_episodes")); }

void ExperimentConfig::validate() const {
  (void)seed();
  if (output_dir().empty()) throw ConfigError("config key 'output_dir' must not be empty");
  source_env().validate();
  target_env().validate();
  (void)source_policy();
  (void)target_policy();
  if (source_size() < 1) throw ConfigError("config key 'data.source_size' must be >= 1");
  if (target_size() < 1) throw ConfigError("config key 'data.target_size' must be >= 1");
  const auto arch = denoiser_arch();
  if (arch.horizon < 2) throw ConfigError("config key 'diffusion.horizon' must be >= 2");
  if (arch.hidden < 1 || arch.embed_dim < 2 || arch.embed_dim % 2 != 0 || arch.channels < 1)
    throw ConfigError("config block 'diffusion' has non-positive widths or an odd embed_dim");
  if (arch.kernel < 1 || arch.kernel % 2 == 0) throw ConfigError("config key 'diffusion.kernel' must be odd");
  if (diffusion_steps() < 2) throw ConfigError("config key 'diffusion.steps' must be >= 2");
  const auto dt = diffusion_train(0);
  if (dt.steps < 0 || dt.batch < 1) throw ConfigError("config block 'diffusion' needs train_steps >= 0, batch >= 1");
  if (!(dt.ema_decay >= 0.0 && dt.ema_decay < 1.0)) throw ConfigError("config key 'diffusion.ema_decay' must lie in [0, 1)");
  const std::string ds = diffusion_dataset();
  if (ds != "source" && ds != "union") throw ConfigError("config key 'diffusion.dataset' must be source or union");
  const auto et = energy_train(0);
  if (et.steps < 0 || et.batch < 1 || et.hidden < 1)
    throw ConfigError("config block 'energy' needs train_steps >= 0, batch >= 1, hidden >= 1");
  (void)return_arch();
  if (return_channels() < 1) throw ConfigError("config key 'energy.return_channels' must be >= 1");
  if (!(energy_gamma() > 0.0 && energy_gamma() <= 1.0)) throw ConfigError("config key 'energy.gamma' must lie in (0, 1]");
  guidance_weights().validate();
  for (const auto& w : guidance_sweep()) w.validate();
  if (dara_eta() < 0.0) throw ConfigError("config key 'energy.dara_eta' must be >= 0");
  planner(diffusion_steps()).validate();
  require_members(planner_arms(), {"cedge-planner", "diffuser-planner"}, "planner.arms");
  const std::string bd = baseline_denoiser();
  if (bd != "source" && bd != "union") throw ConfigError("config key 'planner.baseline_denoiser' must be source or union");
  if (generation_budget() < 1) throw ConfigError("config key 'pipeline.budget' must be >= 1");
  if (!(generation_temperature() >= 0.0)) throw ConfigError("config key 'pipeline.temperature' must be >= 0");
  filter().validate();
  iql(0).validate();
  require_members(iql_arms(), {"iql-syn-trg", "iql-trg", "iql-src-trg", "iql-dara"}, "iql.arms");
  if (eval_episodes() < 1) throw ConfigError("config key 'evaluation.episodes' must be >= 1");
  if (anchor_episodes() < 1) throw ConfigError("config key 'evaluation.anchor_episodes' must be >= 1");
}

#undef CEDGE_NUM
#undef CEDGE_INT
#undef CEDGE_STR

std::string canonical_dump(const json& doc) { return doc.dump(); }

std::string ExperimentConfig::hash() const { return sha256_hex(canonical_dump(doc_)); }

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", digest[i]);
  return out;
}

}  // namespace cedge::experiments
