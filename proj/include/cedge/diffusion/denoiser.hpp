#pragma once

#include "cedge/core/nn.hpp"
#include "cedge/core/params.hpp"
#include "cedge/core/tape.hpp"
#include "cedge/diffusion/schedule.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cedge::diffusion {

enum class DenoiserKind { kDense, kConv };

DenoiserKind parse_denoiser_kind(const std::string& name);
std::string denoiser_kind_name(DenoiserKind kind);

struct DenoiserArch {
  DenoiserKind kind = DenoiserKind::kDense;
  Index horizon = 8;
  Index state_dim = 4;
  Index action_dim = 2;
  Index hidden = 256;   // dense: width of the two hidden layers
  Index embed_dim = 32;  // sinusoidal step embedding
  Index channels = 32;   // conv: base channels
  Index kernel = 5;      // conv: temporal kernel

  Index transition_dim() const { return state_dim + action_dim; }
  Index width() const { return horizon * transition_dim(); }
  bool operator==(const DenoiserArch&) const = default;
};

// Predicts the clean segment τ₀ from (τ_k, k). Segments are passed flattened,
// one per row: (B x H·D). Dense variant: [τ_k, emb(k)] -> MLP(hidden, hidden).
// Conv variant: per-row [τ_k row, emb(k)] -> conv(C) -> conv(C) -> conv(D).
class Denoiser {
 public:
  Denoiser() = default;
  Denoiser(DenoiserArch arch, std::uint64_t seed);

  ad::Var apply(ad::Tape& tape, const ParameterStore& store, ad::Var tau, ad::Var steps) const;

  // No-grad prediction at a common step k for every row.
  Matrix predict(const Matrix& tau_k, int k, bool use_ema = true) const;
  Matrix predict(const ParameterStore& store, const Matrix& tau_k, int k) const;

  const DenoiserArch& arch() const { return arch_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  ParameterStore& ema() { return ema_; }
  const ParameterStore& ema() const { return ema_; }

 private:
  DenoiserArch arch_;
  Mlp mlp_;
  ConvStack conv_;
  ParameterStore params_;
  ParameterStore ema_;
};

struct DiffusionTrainConfig {
  long steps = 50000;
  Index batch = 64;
  AdamConfig adam{2e-4, 0.9, 0.999, 1e-8, 1e-5};
  bool cosine_lr = true;
  double ema_decay = 0.9999;
  // decay_t = min(decay, (1 + t) / (10 + t)); keeps short runs from
  // sampling with near-initial shadow weights.
  bool ema_warmup = true;
  std::uint64_t seed = 0;
};

// Algorithm: sample a batch of source segments, k ~ U{1..T} per row,
// ε ~ N(0, I), τ_k = √ᾱ_k τ₀ + √(1-ᾱ_k) ε, Adam step on mean ‖D(τ_k, k) - τ₀‖²,
// then EMA update. Loss per step is appended to `loss_history` if given. When
// `optimizer` is given its state is used and left in place for checkpointing.
void train_denoiser(Denoiser& model, const Matrix& segments, const NoiseSchedule& schedule,
                    const DiffusionTrainConfig& config, std::vector<double>* loss_history = nullptr,
                    Adam* optimizer = nullptr);

}  // namespace cedge::diffusion
