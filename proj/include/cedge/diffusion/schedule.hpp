#pragma once

#include "cedge/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace cedge::diffusion {

// Variance schedule over k = 1..T; index 0 holds the conventions
// alpha_bar(0) = 1, beta(0) = 0.
template <typename Scalar = double>
class BasicNoiseSchedule {
 public:
  BasicNoiseSchedule() = default;

  // Builds ᾱ from the per-step betas. β = 0 is accepted so that degenerate
  // hand-built schedules (ᾱ_k = 1) can be expressed.
  explicit BasicNoiseSchedule(const std::vector<Scalar>& betas_1_to_T) {
    const int T = static_cast<int>(betas_1_to_T.size());
    if (T < 1) throw ConfigError("noise schedule needs at least one step");
    betas_.assign(T + 1, Scalar(0));
    alphas_.assign(T + 1, Scalar(1));
    alpha_bars_.assign(T + 1, Scalar(1));
    for (int k = 1; k <= T; ++k) {
      const Scalar b = betas_1_to_T[k - 1];
      if (!(b >= Scalar(0) && b < Scalar(1))) throw ConfigError("noise schedule: beta must lie in [0, 1)");
      betas_[k] = b;
      alphas_[k] = Scalar(1) - b;
      alpha_bars_[k] = alpha_bars_[k - 1] * alphas_[k];
    }
  }

  int steps() const { return static_cast<int>(betas_.size()) - 1; }
  Scalar beta(int k) const { return betas_.at(check(k)); }
  Scalar alpha(int k) const { return alphas_.at(check(k)); }
  Scalar alpha_bar(int k) const { return alpha_bars_.at(static_cast<std::size_t>(k)); }

  // β̃_k = (1 - ᾱ_{k-1}) / (1 - ᾱ_k) β_k
  Scalar posterior_variance(int k) const {
    check(k);
    return (Scalar(1) - alpha_bars_[k - 1]) / (Scalar(1) - alpha_bars_[k]) * betas_[k];
  }

  const std::vector<Scalar>& betas() const { return betas_; }
  const std::vector<Scalar>& alpha_bars() const { return alpha_bars_; }

 private:
  std::size_t check(int k) const {
    if (k < 1 || k > steps())
      throw std::out_of_range("diffusion step " + std::to_string(k) + " outside [1, " + std::to_string(steps()) + "]");
    return static_cast<std::size_t>(k);
  }

  std::vector<Scalar> betas_;
  std::vector<Scalar> alphas_;
  std::vector<Scalar> alpha_bars_;
};

using NoiseSchedule = BasicNoiseSchedule<double>;

// ᾱ_k = f(k) / f(0), f(k) = cos²(((k/T + s) / (1 + s)) π/2),
// β_k = min(1 - ᾱ_k / ᾱ_{k-1}, beta_max); ᾱ is then rebuilt from the clipped β.
template <typename Scalar = double>
BasicNoiseSchedule<Scalar> build_cosine_schedule(int T, Scalar offset = Scalar(0.008), Scalar beta_max = Scalar(0.999)) {
  if (T < 2) throw ConfigError("cosine schedule needs T >= 2");
  auto f = [&](int k) {
    const Scalar c = std::cos((Scalar(k) / Scalar(T) + offset) / (Scalar(1) + offset) * std::numbers::pi_v<Scalar> / 2);
    return c * c;
  };
  const Scalar f0 = f(0);
  std::vector<Scalar> betas(T);
  Scalar prev = Scalar(1);
  for (int k = 1; k <= T; ++k) {
    const Scalar ab = f(k) / f0;
    betas[k - 1] = std::min(Scalar(1) - ab / prev, beta_max);
    prev = ab;
  }
  return BasicNoiseSchedule<Scalar>(betas);
}

// τ_k = √ᾱ_k τ₀ + √(1 - ᾱ_k) ε
template <typename Scalar, typename Derived0, typename DerivedE>
MatrixX<Scalar> forward_noise(const BasicNoiseSchedule<Scalar>& schedule, const Eigen::MatrixBase<Derived0>& tau0, int k,
                              const Eigen::MatrixBase<DerivedE>& eps) {
  if (tau0.rows() != eps.rows() || tau0.cols() != eps.cols())
    throw ShapeError("forward_noise: tau0 " + shape_string(tau0) + " vs noise " + shape_string(eps));
  schedule.beta(k);  // range check
  const Scalar ab = schedule.alpha_bar(k);
  return std::sqrt(ab) * tau0 + std::sqrt(Scalar(1) - ab) * eps;
}

// s = -(τ_k - √ᾱ_k τ̂₀) / (1 - ᾱ_k)
template <typename Scalar, typename DerivedK, typename Derived0>
MatrixX<Scalar> score_from_denoiser(const BasicNoiseSchedule<Scalar>& schedule, const Eigen::MatrixBase<DerivedK>& tau_k,
                                    const Eigen::MatrixBase<Derived0>& tau0_hat, int k) {
  if (tau_k.rows() != tau0_hat.rows() || tau_k.cols() != tau0_hat.cols())
    throw ShapeError("score_from_denoiser: tau_k " + shape_string(tau_k) + " vs prediction " + shape_string(tau0_hat));
  schedule.beta(k);
  const Scalar ab = schedule.alpha_bar(k);
  if (!(ab < Scalar(1))) throw NumericError("score_from_denoiser: alpha_bar(k) = 1 at step " + std::to_string(k));
  return -(tau_k - std::sqrt(ab) * tau0_hat) / (Scalar(1) - ab);
}

}  // namespace cedge::diffusion
