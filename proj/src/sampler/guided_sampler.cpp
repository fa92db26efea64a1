#include "cedge/sampler/guided_sampler.hpp"

#include <cmath>

namespace cedge::sampler {

double SamplerConfig::rho_at(int k) const {
  if (rho.empty()) return rho_constant;
  if (k < 1 || k > static_cast<int>(rho.size()))
    throw std::out_of_range("no guidance scale for step " + std::to_string(k));
  return rho[static_cast<std::size_t>(k - 1)];
}

void SamplerConfig::validate(int T) const {
  if (num_samples < 1) throw ConfigError("sampler: num_samples must be >= 1");
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw ConfigError("sampler: temperature must be >= 0");
  if (!rho.empty() && static_cast<int>(rho.size()) != T)
    throw ConfigError("sampler: rho has " + std::to_string(rho.size()) + " entries for " + std::to_string(T) + " steps");
  for (double r : rho)
    if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("sampler: rho must be finite and >= 0");
  if (!(rho_constant >= 0.0) || !std::isfinite(rho_constant)) throw ConfigError("sampler: rho must be finite and >= 0");
}

std::vector<double> tilted_gaussian_rho(const diffusion::NoiseSchedule& schedule, double v0) {
  std::vector<double> rho(static_cast<std::size_t>(schedule.steps()));
  for (int k = 1; k <= schedule.steps(); ++k) {
    const double ab = schedule.alpha_bar(k);
    rho[static_cast<std::size_t>(k - 1)] = std::sqrt(ab) * v0 / (ab * v0 + 1.0 - ab);
  }
  return rho;
}

Matrix guided_reverse_mean(const diffusion::NoiseSchedule& schedule, const Matrix& tau_k, const Matrix& tau0_hat,
                           const Matrix* h, double rho, int k) {
  Matrix score = diffusion::score_from_denoiser(schedule, tau_k, tau0_hat, k);
  if (h) {
    if (h->rows() != tau_k.rows() || h->cols() != tau_k.cols())
      throw ShapeError("guidance score " + shape_string(*h) + " vs batch " + shape_string(tau_k));
    score += rho * *h;
  }
  return (tau_k + schedule.beta(k) * score) / std::sqrt(schedule.alpha(k));
}

double reverse_std(const diffusion::NoiseSchedule& schedule, double temperature, int k) {
  if (k <= 1) return 0.0;
  return temperature * std::sqrt(schedule.posterior_variance(k));
}

Matrix guided_reverse_step(const diffusion::NoiseSchedule& schedule, const DenoiseFn& denoise,
                           const GuidanceFn& guidance, const SamplerConfig& config, const Matrix& tau_k, int k,
                           std::vector<RngStream>& streams) {
  if (k < 1 || k > schedule.steps())
    throw std::out_of_range("reverse step " + std::to_string(k) + " outside [1, " + std::to_string(schedule.steps()) +
                            "]");
  if (static_cast<Index>(streams.size()) != tau_k.rows())
    throw UsageError("reverse step: one rng stream per row is required");
  const Matrix tau0_hat = denoise(tau_k, k);
  Matrix out;
  if (guidance) {
    const Matrix h = guidance(tau_k, k);
    out = guided_reverse_mean(schedule, tau_k, tau0_hat, &h, config.rho_at(k), k);
  } else {
    out = guided_reverse_mean(schedule, tau_k, tau0_hat, nullptr, 0.0, k);
  }
  if (k > 1) {
    const double sigma = reverse_std(schedule, config.temperature, k);
    for (Index i = 0; i < out.rows(); ++i) {
      RngStream& rng = streams[static_cast<std::size_t>(i)];
      for (Index j = 0; j < out.cols(); ++j) out(i, j) += sigma * rng.normal();
    }
  }
  return out;
}

void apply_state_conditioning(Matrix& tau, const Vector& state) {
  if (state.size() > tau.cols()) throw ShapeError("conditioning state is wider than the segment");
  for (Index i = 0; i < tau.rows(); ++i) tau.row(i).head(state.size()) = state.transpose();
}

Matrix apply_state_conditioning(const Matrix& segment, const Vector& state, Index state_dim) {
  if (state.size() != state_dim)
    throw ShapeError("conditioning state has " + std::to_string(state.size()) + " entries, expected " +
                     std::to_string(state_dim));
  Matrix out = segment;
  out.row(0).head(state_dim) = state.transpose();
  return out;
}

Matrix sample_trajectories(const diffusion::NoiseSchedule& schedule, const DenoiseFn& denoise,
                           const GuidanceFn& guidance, const SamplerConfig& config, Index width,
                           const ConditionSpec& condition, const Observer& observer) {
  const int T = schedule.steps();
  config.validate(T);
  if (condition.state && !condition.state->allFinite()) throw ConfigError("conditioning state is not finite");
  const Index total = config.num_samples;
  const Index chunk = config.chunk > 0 ? std::min<Index>(config.chunk, total) : total;
  Matrix result(total, width);
  for (Index begin = 0; begin < total; begin += chunk) {
    const Index n = std::min(chunk, total - begin);
    std::vector<RngStream> streams;
    streams.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) streams.emplace_back(config.seed, static_cast<std::uint64_t>(begin + i));
    Matrix tau(n, width);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < width; ++j) tau(i, j) = streams[static_cast<std::size_t>(i)].normal();
    if (condition.state) apply_state_conditioning(tau, *condition.state);
    if (observer) observer(T, tau);
    for (int k = T; k >= 1; --k) {
      tau = guided_reverse_step(schedule, denoise, guidance, config, tau, k, streams);
      if (condition.state) apply_state_conditioning(tau, *condition.state);
      if (observer) observer(k - 1, tau);
    }
    result.middleRows(begin, n) = tau;
  }
  return result;
}

DenoiseFn ema_denoiser(const diffusion::Denoiser& model) {
  return [&model](const Matrix& tau_k, int k) { return model.predict(tau_k, k, true); };
}

GuidanceFn energy_guidance(const energy::EnergyBundle& bundle, const energy::GuidanceWeights& weights) {
  weights.validate();
  if (weights.all_zero()) return {};
  return [&bundle, weights](const Matrix& tau_k, int) { return energy::weighted_energy_gradient(bundle, tau_k, weights); };
}

}  // namespace cedge::sampler
