#pragma once

#include "cedge/core/params.hpp"
#include "cedge/core/rng.hpp"
#include "cedge/core/tape.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace cedge::testing {

inline Matrix random_matrix(Index rows, Index cols, RngStream& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  rng.fill_normal(m);
  return scale * m;
}

// Builds a scalar from the given input leaves.
using ScalarGraph = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

struct GradCheck {
  double rel_error = 0.0;  // ‖analytic - numeric‖ / max(‖analytic‖, ‖numeric‖)
  int coords = 0;
  int skipped = 0;  // coordinates whose ±h probe straddles a relu kink
};

// Central finite differences over every input entry and, if `params` is
// given, every parameter entry. A coordinate is skipped when its forward and
// backward one-sided slopes disagree grossly, which only happens when the
// probe crosses a non-differentiable point.
inline GradCheck check_gradients(const ScalarGraph& f, std::vector<Matrix> inputs, ParameterStore* params,
                                 double h = 1e-5) {
  ad::Tape tape;
  std::vector<ad::Var> leaves;
  for (std::size_t i = 0; i < inputs.size(); ++i) leaves.push_back(tape.input("x" + std::to_string(i), inputs[i]));
  const ad::Var out = f(tape, leaves);
  const double f0 = tape.scalar(out);
  const auto grads = tape.backward(out);

  auto eval = [&]() {
    ad::Tape t;
    std::vector<ad::Var> xs;
    for (const auto& m : inputs) xs.push_back(t.constant(m));
    return t.scalar(f(t, xs));
  };

  std::vector<double> analytic, numeric;
  GradCheck result;
  auto probe = [&](double& slot, double g) {
    const double orig = slot;
    slot = orig + h;
    const double fp = eval();
    slot = orig - h;
    const double fm = eval();
    slot = orig;
    const double fwd = (fp - f0) / h, bwd = (f0 - fm) / h;
    ++result.coords;
    if (std::abs(fwd - bwd) > 1e-3 * (std::abs(fwd) + std::abs(bwd)) + 1e-4) {
      ++result.skipped;
      return;
    }
    analytic.push_back(g);
    numeric.push_back((fp - fm) / (2 * h));
  };

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto it = grads.inputs.find("x" + std::to_string(i));
    for (Index r = 0; r < inputs[i].rows(); ++r)
      for (Index c = 0; c < inputs[i].cols(); ++c)
        probe(inputs[i](r, c), it == grads.inputs.end() ? 0.0 : it->second(r, c));
  }
  if (params) {
    for (auto& [name, value] : *params) {
      const auto it = grads.params.find(name);
      for (Index r = 0; r < value.rows(); ++r)
        for (Index c = 0; c < value.cols(); ++c) probe(value(r, c), it == grads.params.end() ? 0.0 : it->second(r, c));
    }
  }
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
  result.rel_error = std::sqrt(diff) / denom;
  return result;
}

// Reduces a (B x n) node to a scalar with fixed random weights so that the
// check covers the whole Jacobian, not just its column sums.
inline ad::Var project(ad::Tape& tape, ad::Var x, std::uint64_t seed) {
  RngStream rng(seed, 99);
  const Matrix& v = tape.value(x);
  return tape.weighted_sum(x, random_matrix(v.rows(), v.cols(), rng));
}

}  // namespace cedge::testing
