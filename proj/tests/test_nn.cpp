#include "support.hpp"

#include "cedge/core/io.hpp"
#include "cedge/core/nn.hpp"

#include <doctest.h>

#include <filesystem>
#include <limits>

using namespace cedge;

TEST_CASE("adam first step matches the closed form with decoupled weight decay") {
  ParameterStore p;
  p.add("w", (Matrix(1, 3) << 1.0, -2.0, 0.5).finished());
  const Matrix g = (Matrix(1, 3) << 0.3, -0.1, 0.0).finished();
  AdamConfig cfg{0.01, 0.9, 0.999, 1e-8, 0.1};
  Adam adam(cfg);
  const Matrix before = p.at("w");
  adam.step(p, {{"w", g}});
  for (Index j = 0; j < 3; ++j) {
    // m̂ = g, v̂ = g² after bias correction at t = 1.
    const double expected = before(0, j) * (1 - cfg.lr * cfg.weight_decay) -
                            cfg.lr * g(0, j) / (std::abs(g(0, j)) + cfg.eps);
    CHECK(p.at("w")(0, j) == doctest::Approx(expected).epsilon(1e-12));
  }
  CHECK(adam.steps() == 1);
}

TEST_CASE("adam rejects non-finite gradients without touching parameters") {
  ParameterStore p;
  p.add("a", Matrix::Ones(1, 2));
  p.add("b", Matrix::Ones(1, 2));
  Adam adam;
  Matrix bad = Matrix::Zero(1, 2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  const ParameterStore before = p;
  CHECK_THROWS_AS(adam.step(p, {{"a", Matrix::Ones(1, 2)}, {"b", bad}}), NumericError);
  CHECK(p == before);
  CHECK(adam.steps() == 0);
}

TEST_CASE("ema and cosine schedule") {
  ParameterStore shadow, online;
  shadow.add("x", Matrix::Constant(2, 2, 1.0));
  online.add("x", Matrix::Constant(2, 2, 3.0));
  ema_update(shadow, online, 0.75);
  CHECK(shadow.at("x")(1, 1) == doctest::Approx(1.5));
  CHECK(cosine_lr(1.0, 0, 100) == doctest::Approx(1.0));
  CHECK(cosine_lr(1.0, 50, 100) == doctest::Approx(0.5));
  CHECK(cosine_lr(1.0, 100, 100) == doctest::Approx(0.0));
}

TEST_CASE("mlp naming, init bounds and determinism") {
  Mlp net("net", {3, 5, 2});
  ParameterStore a, b;
  RngStream r1(7, 1), r2(7, 1);
  net.init(a, r1);
  net.init(b, r2);
  CHECK(a == b);
  CHECK(a.contains("net.l0.weight"));
  CHECK(a.contains("net.l1.bias"));
  CHECK(a.at("net.l0.weight").rows() == 3);
  CHECK(a.at("net.l0.weight").cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(3.0));
  CHECK(a.parameter_count() == 3 * 5 + 5 + 5 * 2 + 2);
}

TEST_CASE("rng streams are reproducible and distinct") {
  RngStream a(11, 3), b(11, 3), c(11, 4);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
  }
  CHECK(stream_id("planner") == stream_id("planner"));
  CHECK(stream_id("planner") != stream_id("planned"));
  CHECK(mix_seed(1, 2) != mix_seed(2, 1));
}

TEST_CASE("atomic write and 17-digit formatting round-trip") {
  const auto dir = std::filesystem::temp_directory_path() / "cedge_io_test";
  std::filesystem::remove_all(dir);
  const std::string path = (dir / "nested" / "f.txt").string();
  atomic_write(path, "hello");
  CHECK(read_file(path) == "hello");
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  RngStream rng(3, 0);
  for (int i = 0; i < 100; ++i) {
    const double v = rng.normal() * std::pow(10.0, static_cast<int>(rng.index(20)) - 10);
    CHECK(std::stod(format_double(v)) == v);
  }
  std::filesystem::remove_all(dir);
}
