#include "support.hpp"

#include "cedge/diffusion/denoiser.hpp"
#include "cedge/diffusion/schedule.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace cedge;
using namespace cedge::diffusion;
using cedge::testing::random_matrix;

TEST_CASE("cosine schedule identities") {
  for (int T : {2, 20, 100, 1000}) {
    const auto s = build_cosine_schedule(T);
    CHECK(s.steps() == T);
    CHECK(s.alpha_bar(0) == 1.0);
    CHECK(s.alpha_bar(1) < 1.0);
    for (int k = 1; k <= T; ++k) {
      CHECK(s.beta(k) > 0.0);
      CHECK(s.beta(k) < 1.0);
      CHECK(s.alpha_bar(k) < s.alpha_bar(k - 1));
      CHECK(std::abs(s.beta(k) - (1.0 - s.alpha_bar(k) / s.alpha_bar(k - 1))) < 1e-12);
    }
  }
  // Independent evaluation of the cosine formula at T = 20.
  const double off = 0.008;
  auto f = [&](double t) { return std::pow(std::cos((t + off) / (1 + off) * M_PI / 2), 2); };
  const auto s20 = build_cosine_schedule(20);
  double ab = 1.0;
  for (int k = 1; k <= 20; ++k) ab *= 1.0 - std::min(1.0 - f(k / 20.0) / f((k - 1) / 20.0), 0.999);
  CHECK(s20.alpha_bar(20) == doctest::Approx(ab).epsilon(1e-12));
  CHECK(s20.alpha_bar(20) < 0.01);
  CHECK_THROWS_AS(build_cosine_schedule(1), ConfigError);
}

TEST_CASE("forward noise limbs") {
  const auto s = build_cosine_schedule(10);
  RngStream rng(1, 1);
  const Matrix x0 = random_matrix(3, 4, rng);
  CHECK((forward_noise(s, x0, 4, Matrix::Zero(3, 4)) - std::sqrt(s.alpha_bar(4)) * x0).norm() == 0.0);
  const NoiseSchedule flat(std::vector<double>{0.0, 0.0});
  CHECK(forward_noise(flat, x0, 1, random_matrix(3, 4, rng)) == x0);
  CHECK_THROWS_AS(forward_noise(s, x0, 1, Matrix::Zero(3, 3)), ShapeError);
  CHECK_THROWS(forward_noise(s, x0, 0, Matrix::Zero(3, 4)));
  CHECK_THROWS(forward_noise(s, x0, 11, Matrix::Zero(3, 4)));
}

TEST_CASE("score from denoiser") {
  const NoiseSchedule half(std::vector<double>{0.5});
  const Matrix one = Matrix::Ones(1, 1);
  CHECK(score_from_denoiser(half, one, Matrix::Zero(1, 1), 1)(0, 0) == doctest::Approx(-2.0));

  const auto s = build_cosine_schedule(20);
  RngStream rng(4, 0);
  const Matrix tk = random_matrix(2, 5, rng);
  for (int k : {1, 7, 20}) {
    const double ab = s.alpha_bar(k);
    CHECK(score_from_denoiser(s, tk, tk / std::sqrt(ab), k).cwiseAbs().maxCoeff() < 1e-12);
    // N(0, 1) data: the optimal denoiser √ᾱ τ_k gives the marginal score -τ_k.
    CHECK((score_from_denoiser(s, tk, std::sqrt(ab) * tk, k) + tk).cwiseAbs().maxCoeff() < 1e-12);
    const Matrix a = random_matrix(2, 5, rng), b = random_matrix(2, 5, rng);
    const Matrix lhs = score_from_denoiser(s, tk, 0.3 * a + 0.7 * b, k);
    const Matrix rhs = 0.3 * score_from_denoiser(s, tk, a, k) + 0.7 * score_from_denoiser(s, tk, b, k);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
  }
  const NoiseSchedule flat(std::vector<double>{0.0});
  CHECK_THROWS_AS(score_from_denoiser(flat, one, one, 1), NumericError);
}

TEST_CASE("denoiser forward contract for both variants") {
  for (auto kind : {DenoiserKind::kDense, DenoiserKind::kConv}) {
    DenoiserArch arch;
    arch.kind = kind;
    arch.horizon = 4;
    arch.hidden = 16;
    arch.channels = 6;
    arch.kernel = 3;
    arch.embed_dim = 8;
    Denoiser d(arch, 3);
    RngStream rng(0, 0);
    const Matrix x = random_matrix(5, arch.width(), rng, 2.0);
    const Matrix y = d.predict(x, 3, false);
    CHECK(y.rows() == 5);
    CHECK(y.cols() == arch.width());
    CHECK(y.allFinite());
    CHECK(y == d.predict(x, 3, false));
    CHECK(d.ema() == d.params());
    CHECK(parse_denoiser_kind(denoiser_kind_name(kind)) == kind);
  }
  CHECK_THROWS(parse_denoiser_kind("unet"));
}

TEST_CASE("denoiser gradients match finite differences") {
  for (auto kind : {DenoiserKind::kDense, DenoiserKind::kConv}) {
    DenoiserArch arch;
    arch.kind = kind;
    arch.horizon = 3;
    arch.hidden = 6;
    arch.channels = 4;
    arch.kernel = 3;
    arch.embed_dim = 4;
    Denoiser d(arch, 11);
    RngStream rng(5, 5);
    const Matrix x = random_matrix(2, arch.width(), rng);
    const Matrix k = (Matrix(2, 1) << 2.0, 5.0).finished();
    auto res = cedge::testing::check_gradients(
        [&](ad::Tape& t, const std::vector<ad::Var>& v) {
          return cedge::testing::project(t, d.apply(t, d.params(), v[0], t.constant(k)), 21);
        },
        {x}, &d.params());
    CHECK(res.rel_error < 1e-6);
    CHECK(res.skipped * 20 <= res.coords);
  }
}

TEST_CASE("denoiser training memorizes a single segment and tracks ema") {
  DenoiserArch arch;
  arch.horizon = 4;
  arch.hidden = 64;
  arch.embed_dim = 8;
  Denoiser d(arch, 2);
  RngStream rng(6, 0);
  const Matrix one = random_matrix(1, arch.width(), rng);
  Matrix data(32, arch.width());
  for (Index i = 0; i < 32; ++i) data.row(i) = one;
  const auto sched = build_cosine_schedule(10);
  DiffusionTrainConfig cfg;
  cfg.steps = 3000;
  cfg.batch = 32;
  cfg.adam.lr = 2e-3;
  cfg.adam.weight_decay = 0.0;
  cfg.ema_decay = 0.0;
  std::vector<double> loss;
  train_denoiser(d, data, sched, cfg, &loss);
  REQUIRE(loss.size() == 3000);
  auto window = [&](std::size_t from) {
    return std::accumulate(loss.begin() + static_cast<long>(from), loss.begin() + static_cast<long>(from) + 100, 0.0) / 100;
  };
  CHECK(window(loss.size() - 100) < 1e-3 * window(0));
  CHECK(d.ema() == d.params());
  CHECK_THROWS(train_denoiser(d, Matrix(0, arch.width()), sched, cfg));
}
