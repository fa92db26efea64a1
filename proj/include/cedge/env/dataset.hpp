#pragma once

#include "cedge/core/rng.hpp"
#include "cedge/core/tensor.hpp"
#include "cedge/env/pointmass.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace cedge::env {

enum class Domain { kSource, kTarget };

struct Transition {
  State4 s = State4::Zero();
  Action2 a = Action2::Zero();
  double r = 0.0;
  State4 s_next = State4::Zero();
  bool done = false;
  int episode = 0;
  int t = 0;
};

struct EpisodeRange {
  int episode = 0;
  std::size_t begin = 0;
  std::size_t end = 0;  // exclusive
  std::size_t length() const { return end - begin; }
};

// Transitions stored in (episode, t) order; each episode occupies a contiguous
// range of the list.
class OfflineDataset {
 public:
  OfflineDataset() = default;
  explicit OfflineDataset(Domain domain) : domain_(domain) {}

  Domain domain() const { return domain_; }
  void set_domain(Domain d) { domain_ = d; }

  // Appends a transition; it must either continue the last episode at t + 1
  // or start a new episode id at t = 0.
  void push_back(const Transition& tr);

  std::size_t size() const { return transitions_.size(); }
  bool empty() const { return transitions_.empty(); }
  const Transition& operator[](std::size_t i) const { return transitions_[i]; }
  Transition& operator[](std::size_t i) { return transitions_[i]; }
  const std::vector<Transition>& transitions() const { return transitions_; }
  const std::vector<EpisodeRange>& episodes() const { return episodes_; }

  // Packed views: rows are transitions.
  Matrix states() const;
  Matrix actions() const;
  Matrix next_states() const;
  Vector rewards() const;

  bool operator==(const OfflineDataset& other) const;

 private:
  Domain domain_ = Domain::kSource;
  std::vector<Transition> transitions_;
  std::vector<EpisodeRange> episodes_;
};

// Whole episodes of `params.episode_len` steps; the last may be truncated to
// hit exactly n_transitions (its final step then has done = false).
OfflineDataset collect_dataset(const EnvParams& params, BehaviorPolicy policy, std::size_t n_transitions,
                               std::uint64_t seed, Domain domain);

// Per-dimension Gaussian normalizer with population std floored at 1e-6.
class Normalizer {
 public:
  static constexpr double kStdFloor = 1e-6;

  Normalizer() = default;
  Normalizer(Vector mean, Vector std);

  static Normalizer fit(const Matrix& rows);
  static Normalizer fit(const OfflineDataset& dataset);

  const Vector& mean() const { return mean_; }
  const Vector& std() const { return std_; }
  Index dim() const { return mean_.size(); }

  // Row-wise on (N x d) matrices.
  Matrix normalize(const Matrix& rows) const;
  Matrix denormalize(const Matrix& rows) const;
  State4 normalize(const State4& s) const;
  State4 denormalize(const State4& s) const;

 private:
  Vector mean_;
  Vector std_;
};

// Packed trajectory segments: each row of `data` is an H x (d_s + d_a)
// segment flattened row-major (per time row: normalized state, raw action).
struct SegmentSet {
  Index horizon = 0;
  Index state_dim = kStateDim;
  Index action_dim = kActionDim;
  Matrix data;
  Matrix rewards;  // N x H when extracted from a dataset; empty otherwise
  std::vector<int> episode;
  std::vector<int> start;

  Index size() const { return data.rows(); }
  Index transition_dim() const { return state_dim + action_dim; }
  Index width() const { return horizon * transition_dim(); }
  // H x D copy of segment i.
  Matrix segment(Index i) const;
  void append(const SegmentSet& other);
};

// Stride-1 windows of H consecutive steps inside each episode:
// max(0, L - H + 1) segments for an episode of L transitions.
SegmentSet extract_segments(const OfflineDataset& dataset, const Normalizer& normalizer, Index horizon);

// Discounted return Σ_{t<H} γ^t r_t of each segment (segment-local t).
Vector discounted_returns(const SegmentSet& segments, double gamma);

// CSV with header episode,t,s0,s1,s2,s3,a0,a1,reward,ns0,ns1,ns2,ns3,done and
// 17 significant digits per float.
void write_csv(std::ostream& out, const OfflineDataset& dataset);
OfflineDataset read_csv(std::istream& in, Domain domain);
void save_csv(const std::string& path, const OfflineDataset& dataset);
OfflineDataset load_csv(const std::string& path, Domain domain);

extern const char* const kCsvHeader;

}  // namespace cedge::env

namespace cedge::env {

// Column-packed transitions, states optionally normalized.
struct TransitionBatch {
  Matrix s;
  Matrix a;
  Matrix s_next;
  Vector r;
  Vector done;

  Index size() const { return s.rows(); }
  TransitionBatch rows(const std::vector<Index>& idx) const;
  static TransitionBatch concat(const TransitionBatch& x, const TransitionBatch& y);
};

TransitionBatch make_transition_batch(const OfflineDataset& dataset, const Normalizer* normalizer);

}  // namespace cedge::env
