#include "cedge/experiments/artifacts.hpp"

namespace cedge::experiments {

namespace {

const ParameterStore& store(const Checkpoint& ckpt, const std::string& name) {
  auto it = ckpt.stores.find(name);
  if (it == ckpt.stores.end()) throw FormatError("checkpoint '" + ckpt.kind + "' lacks parameter group " + name);
  return it->second;
}

// Replaces `target` with `loaded`, requiring identical names and shapes.
void assign(ParameterStore& target, const ParameterStore& loaded, const std::string& what) {
  if (target.size() != loaded.size()) throw FormatError(what + ": parameter count differs from architecture");
  for (const auto& [name, value] : target) {
    if (!loaded.contains(name)) throw FormatError(what + ": missing parameter " + name);
    const Matrix& m = loaded.at(name);
    if (m.rows() != value.rows() || m.cols() != value.cols())
      throw FormatError(what + ": parameter " + name + " has shape " + shape_string(m) + ", expected " +
                        shape_string(value));
  }
  target = loaded;
}

const env::Normalizer& normalizer_of(const Checkpoint& ckpt) {
  if (!ckpt.normalizer) throw FormatError("checkpoint '" + ckpt.kind + "' lacks a normalizer");
  return *ckpt.normalizer;
}

template <typename T>
T arch_field(const Checkpoint& ckpt, const char* key) {
  try {
    return ckpt.arch.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError("checkpoint '" + ckpt.kind + "' architecture lacks " + key);
  }
}

}  // namespace

Checkpoint denoiser_checkpoint(const diffusion::Denoiser& model, const diffusion::NoiseSchedule& schedule,
                               const env::Normalizer& normalizer, const Adam* optimizer, const Provenance& prov) {
  const auto& a = model.arch();
  Checkpoint c;
  c.kind = "diffusion";
  c.config_hash = prov.config_hash;
  c.seed = prov.seed;
  c.arch = {{"kind", diffusion::denoiser_kind_name(a.kind)},
            {"horizon", a.horizon},
            {"state_dim", a.state_dim},
            {"action_dim", a.action_dim},
            {"hidden", a.hidden},
            {"embed_dim", a.embed_dim},
            {"channels", a.channels},
            {"kernel", a.kernel}};
  c.stores["params"] = model.params();
  c.stores["ema"] = model.ema();
  if (optimizer) c.optimizers["adam"] = OptimizerState::capture(*optimizer);
  c.normalizer = normalizer;
  for (int k = 1; k <= schedule.steps(); ++k) c.betas.push_back(schedule.beta(k));
  return c;
}

DiffusionArtifact restore_denoiser(const Checkpoint& ckpt) {
  diffusion::DenoiserArch a;
  a.kind = diffusion::parse_denoiser_kind(arch_field<std::string>(ckpt, "kind"));
  a.horizon = arch_field<Index>(ckpt, "horizon");
  a.state_dim = arch_field<Index>(ckpt, "state_dim");
  a.action_dim = arch_field<Index>(ckpt, "action_dim");
  a.hidden = arch_field<Index>(ckpt, "hidden");
  a.embed_dim = arch_field<Index>(ckpt, "embed_dim");
  a.channels = arch_field<Index>(ckpt, "channels");
  a.kernel = arch_field<Index>(ckpt, "kernel");
  if (ckpt.betas.empty()) throw FormatError("diffusion checkpoint lacks a noise schedule");
  DiffusionArtifact out{diffusion::Denoiser(a, ckpt.seed), diffusion::NoiseSchedule(ckpt.betas), normalizer_of(ckpt),
                        ckpt.config_hash};
  assign(out.model.params(), store(ckpt, "params"), "diffusion params");
  assign(out.model.ema(), store(ckpt, "ema"), "diffusion ema");
  return out;
}

Checkpoint energy_checkpoint(const EnergyArtifact& art, const Provenance& prov) {
  const auto& b = art.bundle;
  if (!b.domain.trained || !b.ret.trained || !b.policy.trained || !art.annotator.trained)
    throw UsageError("energy checkpoint requires every member to be trained");
  Checkpoint c;
  c.kind = "energy";
  c.config_hash = prov.config_hash;
  c.seed = prov.seed;
  c.arch = {{"horizon", b.horizon},
            {"state_dim", b.state_dim()},
            {"action_dim", b.action_dim()},
            {"classifier_hidden", b.domain.sas.net().sizes()[1]},
            {"return_arch", energy::return_arch_name(b.ret.arch())},
            {"return_hidden", b.ret.hidden()},
            {"return_channels", b.ret.channels()},
            {"gamma", b.ret.gamma()},
            {"policy_hidden", b.policy.hidden()},
            {"annotator_hidden", art.annotator.hidden()}};
  c.meta = {{"weights", {{"domain", b.weights.domain}, {"ret", b.weights.ret}, {"policy", b.weights.policy}}}};
  c.stores["domain.sas"] = b.domain.sas.params();
  c.stores["domain.sa"] = b.domain.sa.params();
  c.stores["return"] = b.ret.params();
  c.stores["policy"] = b.policy.params();
  c.stores["annotator"] = art.annotator.params();
  c.normalizer = b.normalizer;
  return c;
}

EnergyArtifact restore_energy(const Checkpoint& ckpt) {
  const auto H = arch_field<Index>(ckpt, "horizon");
  const auto ds = arch_field<Index>(ckpt, "state_dim");
  const auto da = arch_field<Index>(ckpt, "action_dim");
  EnergyArtifact out;
  out.config_hash = ckpt.config_hash;
  auto& b = out.bundle;
  b.horizon = H;
  b.normalizer = normalizer_of(ckpt);
  b.domain = energy::DomainClassifierPair(ds, da, arch_field<Index>(ckpt, "classifier_hidden"), ckpt.seed);
  assign(b.domain.sas.params(), store(ckpt, "domain.sas"), "domain.sas");
  assign(b.domain.sa.params(), store(ckpt, "domain.sa"), "domain.sa");
  b.domain.trained = true;
  b.ret = energy::ReturnPredictor(energy::parse_return_arch(arch_field<std::string>(ckpt, "return_arch")), H, ds + da,
                                  arch_field<Index>(ckpt, "return_hidden"), arch_field<Index>(ckpt, "return_channels"),
                                  arch_field<double>(ckpt, "gamma"), ckpt.seed);
  assign(b.ret.params(), store(ckpt, "return"), "return");
  b.ret.trained = true;
  b.policy = energy::BehaviorPolicyModel(ds, da, arch_field<Index>(ckpt, "policy_hidden"), ckpt.seed);
  assign(b.policy.params(), store(ckpt, "policy"), "policy");
  b.policy.trained = true;
  out.annotator = energy::RewardAnnotator(ds, da, arch_field<Index>(ckpt, "annotator_hidden"), ckpt.seed);
  assign(out.annotator.params(), store(ckpt, "annotator"), "annotator");
  out.annotator.trained = true;
  try {
    const json& w = ckpt.meta.at("weights");
    b.weights = {w.at("domain").get<double>(), w.at("ret").get<double>(), w.at("policy").get<double>()};
  } catch (const json::exception&) {
    throw FormatError("energy checkpoint lacks guidance weights");
  }
  return out;
}

Checkpoint iql_checkpoint(const rl::IqlAgent& agent, const std::string& arm, const Provenance& prov) {
  Checkpoint c;
  c.kind = "iql";
  c.config_hash = prov.config_hash;
  c.seed = prov.seed;
  c.arch = {{"state_dim", agent.state_dim()}, {"action_dim", agent.action_dim()}, {"hidden", agent.hidden()}};
  c.meta = {{"arm", arm}};
  c.stores["value"] = agent.value_params;
  c.stores["q"] = agent.q_params;
  c.stores["q_target"] = agent.q_target;
  c.stores["policy"] = agent.policy_params;
  c.optimizers["value"] = OptimizerState::capture(agent.value_opt);
  c.optimizers["q"] = OptimizerState::capture(agent.q_opt);
  c.optimizers["policy"] = OptimizerState::capture(agent.policy_opt);
  c.normalizer = agent.normalizer();
  return c;
}

rl::IqlAgent restore_iql(const Checkpoint& ckpt) {
  rl::IqlAgent agent(arch_field<Index>(ckpt, "state_dim"), arch_field<Index>(ckpt, "action_dim"),
                     arch_field<Index>(ckpt, "hidden"), normalizer_of(ckpt), ckpt.seed);
  assign(agent.value_params, store(ckpt, "value"), "iql value");
  assign(agent.q_params, store(ckpt, "q"), "iql q");
  assign(agent.q_target, store(ckpt, "q_target"), "iql q_target");
  assign(agent.policy_params, store(ckpt, "policy"), "iql policy");
  for (auto [name, opt] : {std::pair{"value", &agent.value_opt}, {"q", &agent.q_opt}, {"policy", &agent.policy_opt}}) {
    auto it = ckpt.optimizers.find(name);
    if (it != ckpt.optimizers.end()) *opt = it->second.restore();
  }
  return agent;
}

}  // namespace cedge::experiments
