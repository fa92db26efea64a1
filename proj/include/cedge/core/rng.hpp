#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <string_view>

namespace cedge {

// Deterministic random stream keyed by (seed, stream id). Streams with
// different ids are seeded through a seed_seq mix of both words.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream() const { return stream_; }

  std::uint64_t next_u64() { return engine_(); }
  double uniform();
  double uniform(double lo, double hi);
  double normal();
  // Uniform integer in [0, n).
  std::int64_t index(std::int64_t n);

  template <typename Derived>
  void fill_normal(Eigen::DenseBase<Derived>& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = normal();
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// SplitMix64 finalizer; used to derive child seeds (e.g. per decision step).
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// Stable stream id for a label (FNV-1a); std::hash is not stable across
// standard libraries.
std::uint64_t stream_id(std::string_view label);

}  // namespace cedge
