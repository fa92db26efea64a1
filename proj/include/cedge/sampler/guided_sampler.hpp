#pragma once

#include "cedge/core/rng.hpp"
#include "cedge/diffusion/denoiser.hpp"
#include "cedge/diffusion/schedule.hpp"
#include "cedge/energy/bundle.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace cedge::sampler {

// Predicts τ̂₀ for a batch of flattened segments at step k.
using DenoiseFn = std::function<Matrix(const Matrix& tau_k, int k)>;
// Returns the guidance score h = -∇E for a batch at step k.
using GuidanceFn = std::function<Matrix(const Matrix& tau_k, int k)>;
// Called with the batch after initialization (k = T) and after every reverse
// step (with the step just produced, k - 1).
using Observer = std::function<void(int k, const Matrix& tau)>;

struct SamplerConfig {
  // Per-step guidance scales ρ_k stored at index k - 1; when empty every step
  // uses rho_constant.
  std::vector<double> rho;
  double rho_constant = 1.0;
  double temperature = 0.5;
  int num_samples = 1;
  std::uint64_t seed = 0;
  // Rows per batched denoiser call; 0 means all samples at once.
  Index chunk = 0;

  double rho_at(int k) const;
  void validate(int T) const;
};

// ρ_k = √ᾱ_k v₀ / (ᾱ_k v₀ + 1 - ᾱ_k): exact for a linear energy on a
// N(μ, v₀) prior.
std::vector<double> tilted_gaussian_rho(const diffusion::NoiseSchedule& schedule, double v0);

struct ConditionSpec {
  std::optional<Vector> state;  // normalized current state
};

// μ̃ = (τ_k + β_k (s + ρ_k h)) / √α_k with s = -(τ_k - √ᾱ_k τ̂₀) / (1 - ᾱ_k).
Matrix guided_reverse_mean(const diffusion::NoiseSchedule& schedule, const Matrix& tau_k, const Matrix& tau0_hat,
                           const Matrix* h, double rho, int k);

// σ_k² = temperature² β̃_k for k > 1, σ_1 = 0.
double reverse_std(const diffusion::NoiseSchedule& schedule, double temperature, int k);

// One guided reverse step; row i draws its noise from streams[i] (only for
// k > 1). `guidance` may be empty, giving plain DDPM.
Matrix guided_reverse_step(const diffusion::NoiseSchedule& schedule, const DenoiseFn& denoise,
                           const GuidanceFn& guidance, const SamplerConfig& config, const Matrix& tau_k, int k,
                           std::vector<RngStream>& streams);

// Overwrites the first state_dim entries of every row (row 0 of each segment).
void apply_state_conditioning(Matrix& tau, const Vector& state);
Matrix apply_state_conditioning(const Matrix& segment, const Vector& state, Index state_dim);

// N independent reverse chains from N(0, I); chain n uses RngStream(seed, n).
// With a condition, the first state of every segment is overwritten at
// initialization and after every reverse step. Returns (N x width).
Matrix sample_trajectories(const diffusion::NoiseSchedule& schedule, const DenoiseFn& denoise,
                           const GuidanceFn& guidance, const SamplerConfig& config, Index width,
                           const ConditionSpec& condition = {}, const Observer& observer = {});

DenoiseFn ema_denoiser(const diffusion::Denoiser& model);
// Empty when the weights are all zero.
GuidanceFn energy_guidance(const energy::EnergyBundle& bundle, const energy::GuidanceWeights& weights);

}  // namespace cedge::sampler
