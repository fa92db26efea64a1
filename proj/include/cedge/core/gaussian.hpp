#pragma once

#include "cedge/core/tensor.hpp"

#include <cmath>
#include <numbers>

namespace cedge {

// Σ_i [-log_std_i - ½ln(2π) - ½((x_i - mean_i) / exp(log_std_i))²]
template <typename DerivedX, typename DerivedM, typename DerivedS>
typename DerivedX::Scalar gaussian_log_prob(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedM>& mean,
                                            const Eigen::MatrixBase<DerivedS>& log_std) {
  using Scalar = typename DerivedX::Scalar;
  if (x.size() != mean.size() || x.size() != log_std.size())
    throw ShapeError("gaussian_log_prob: dimensions " + std::to_string(x.size()) + ", " + std::to_string(mean.size()) +
                     ", " + std::to_string(log_std.size()));
  const Scalar half_log_2pi = Scalar(0.5) * std::log(Scalar(2) * std::numbers::pi_v<Scalar>);
  Scalar total = 0;
  for (Index i = 0; i < x.size(); ++i) {
    const Scalar z = (x(i) - mean(i)) / std::exp(log_std(i));
    total += -log_std(i) - half_log_2pi - Scalar(0.5) * z * z;
  }
  return total;
}

}  // namespace cedge
