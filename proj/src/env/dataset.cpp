#include "cedge/env/dataset.hpp"

#include "cedge/core/io.hpp"

#include <fmt/format.h>

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>

namespace cedge::env {

const char* const kCsvHeader = "episode,t,s0,s1,s2,s3,a0,a1,reward,ns0,ns1,ns2,ns3,done";

void OfflineDataset::push_back(const Transition& tr) {
  if (!episodes_.empty() && episodes_.back().episode == tr.episode) {
    const Transition& last = transitions_.back();
    if (tr.t != last.t + 1)
      throw UsageError("dataset: episode " + std::to_string(tr.episode) + " step " + std::to_string(tr.t) +
                       " does not follow step " + std::to_string(last.t));
    if (last.done)
      throw UsageError("dataset: episode " + std::to_string(tr.episode) + " continues after done");
    episodes_.back().end = transitions_.size() + 1;
  } else {
    if (tr.t != 0)
      throw UsageError("dataset: episode " + std::to_string(tr.episode) + " must start at t = 0");
    for (const auto& ep : episodes_)
      if (ep.episode == tr.episode)
        throw UsageError("dataset: episode " + std::to_string(tr.episode) + " is not contiguous");
    episodes_.push_back({tr.episode, transitions_.size(), transitions_.size() + 1});
  }
  transitions_.push_back(tr);
}

Matrix OfflineDataset::states() const {
  Matrix m(static_cast<Index>(size()), kStateDim);
  for (std::size_t i = 0; i < size(); ++i) m.row(static_cast<Index>(i)) = transitions_[i].s.transpose();
  return m;
}

Matrix OfflineDataset::actions() const {
  Matrix m(static_cast<Index>(size()), kActionDim);
  for (std::size_t i = 0; i < size(); ++i) m.row(static_cast<Index>(i)) = transitions_[i].a.transpose();
  return m;
}

Matrix OfflineDataset::next_states() const {
  Matrix m(static_cast<Index>(size()), kStateDim);
  for (std::size_t i = 0; i < size(); ++i) m.row(static_cast<Index>(i)) = transitions_[i].s_next.transpose();
  return m;
}

Vector OfflineDataset::rewards() const {
  Vector v(static_cast<Index>(size()));
  for (std::size_t i = 0; i < size(); ++i) v(static_cast<Index>(i)) = transitions_[i].r;
  return v;
}

bool OfflineDataset::operator==(const OfflineDataset& other) const {
  if (domain_ != other.domain_ || size() != other.size()) return false;
  for (std::size_t i = 0; i < size(); ++i) {
    const Transition& a = transitions_[i];
    const Transition& b = other.transitions_[i];
    if (a.s != b.s || a.a != b.a || a.r != b.r || a.s_next != b.s_next || a.done != b.done || a.episode != b.episode ||
        a.t != b.t)
      return false;
  }
  return true;
}

OfflineDataset collect_dataset(const EnvParams& params, BehaviorPolicy policy, std::size_t n_transitions,
                               std::uint64_t seed, Domain domain) {
  if (n_transitions == 0) throw ConfigError("collect_dataset: n_transitions must be positive");
  params.validate();
  OfflineDataset data(domain);
  int episode = 0;
  while (data.size() < n_transitions) {
    RngStream env_rng(seed, 2 * static_cast<std::uint64_t>(episode));
    RngStream policy_rng(seed, 2 * static_cast<std::uint64_t>(episode) + 1);
    EnvState state = reset(env_rng);
    for (int t = 0; t < params.episode_len && data.size() < n_transitions; ++t) {
      const Action2 a = behavior_action(policy, params, state, policy_rng);
      StepResult next = step(params, state, a, env_rng);
      Transition tr;
      tr.s = state.vector();
      tr.a = a;
      tr.r = next.reward;
      tr.s_next = next.state.vector();
      tr.done = t == params.episode_len - 1;
      tr.episode = episode;
      tr.t = t;
      data.push_back(tr);
      state = next.state;
    }
    ++episode;
  }
  return data;
}

Normalizer::Normalizer(Vector mean, Vector std) : mean_(std::move(mean)), std_(std::move(std)) {
  if (mean_.size() != std_.size()) throw ShapeError("normalizer: mean/std dimension mismatch");
  std_ = std_.cwiseMax(kStdFloor);
}

Normalizer Normalizer::fit(const Matrix& rows) {
  if (rows.rows() == 0) throw UsageError("normalizer: cannot fit an empty dataset");
  Vector mean = rows.colwise().mean().transpose();
  Vector var = (rows.rowwise() - mean.transpose()).cwiseAbs2().colwise().mean().transpose();
  return Normalizer(mean, var.cwiseSqrt());
}

Normalizer Normalizer::fit(const OfflineDataset& dataset) {
  if (dataset.empty()) throw UsageError("normalizer: cannot fit an empty dataset");
  return fit(dataset.states());
}

Matrix Normalizer::normalize(const Matrix& rows) const {
  if (rows.cols() != dim()) throw ShapeError("normalize: expected " + std::to_string(dim()) + " columns");
  return ((rows.rowwise() - mean_.transpose()).array().rowwise() / std_.transpose().array()).matrix();
}

Matrix Normalizer::denormalize(const Matrix& rows) const {
  if (rows.cols() != dim()) throw ShapeError("denormalize: expected " + std::to_string(dim()) + " columns");
  return ((rows.array().rowwise() * std_.transpose().array()).rowwise() + mean_.transpose().array()).matrix();
}

State4 Normalizer::normalize(const State4& s) const {
  if (dim() != kStateDim) throw ShapeError("normalize: normalizer is not 4-dimensional");
  return ((s - mean_).array() / std_.array()).matrix();
}

State4 Normalizer::denormalize(const State4& s) const {
  if (dim() != kStateDim) throw ShapeError("denormalize: normalizer is not 4-dimensional");
  return (s.array() * std_.array()).matrix() + mean_;
}

Matrix SegmentSet::segment(Index i) const {
  return Eigen::Map<const Matrix>(data.row(i).data(), horizon, transition_dim());
}

void SegmentSet::append(const SegmentSet& other) {
  if (size() == 0 && horizon == 0) {
    *this = other;
    return;
  }
  if (other.horizon != horizon || other.state_dim != state_dim || other.action_dim != action_dim)
    throw ShapeError("segment sets with different layouts cannot be merged");
  Matrix d(data.rows() + other.data.rows(), data.cols());
  d << data, other.data;
  data = std::move(d);
  if (rewards.size() > 0 && other.rewards.size() > 0) {
    Matrix r(rewards.rows() + other.rewards.rows(), rewards.cols());
    r << rewards, other.rewards;
    rewards = std::move(r);
  } else {
    rewards.resize(0, 0);
  }
  episode.insert(episode.end(), other.episode.begin(), other.episode.end());
  start.insert(start.end(), other.start.begin(), other.start.end());
}

SegmentSet extract_segments(const OfflineDataset& dataset, const Normalizer& normalizer, Index horizon) {
  if (horizon < 2) throw ConfigError("extract_segments: horizon must be at least 2");
  SegmentSet out;
  out.horizon = horizon;
  Index count = 0;
  for (const auto& ep : dataset.episodes())
    count += std::max<Index>(0, static_cast<Index>(ep.length()) - horizon + 1);
  const Index width = horizon * (kStateDim + kActionDim);
  out.data.resize(count, width);
  out.rewards.resize(count, horizon);
  Index row = 0;
  for (const auto& ep : dataset.episodes()) {
    const Index len = static_cast<Index>(ep.length());
    for (Index start = 0; start + horizon <= len; ++start, ++row) {
      for (Index h = 0; h < horizon; ++h) {
        const Transition& tr = dataset[ep.begin + static_cast<std::size_t>(start + h)];
        const Index base = h * (kStateDim + kActionDim);
        out.data.row(row).segment(base, kStateDim) = normalizer.normalize(tr.s).transpose();
        out.data.row(row).segment(base + kStateDim, kActionDim) = tr.a.transpose();
        out.rewards(row, h) = tr.r;
      }
      out.episode.push_back(ep.episode);
      out.start.push_back(static_cast<int>(start));
    }
  }
  return out;
}

Vector discounted_returns(const SegmentSet& segments, double gamma) {
  if (segments.rewards.rows() != segments.size())
    throw UsageError("discounted_returns: segments carry no rewards");
  Vector weights(segments.rewards.cols());
  double w = 1.0;
  for (Index t = 0; t < weights.size(); ++t, w *= gamma) weights(t) = w;
  return segments.rewards * weights;
}

void write_csv(std::ostream& out, const OfflineDataset& dataset) {
  out << kCsvHeader << '\n';
  std::string line;
  for (const auto& tr : dataset.transitions()) {
    line = fmt::format("{},{}", tr.episode, tr.t);
    for (Index i = 0; i < kStateDim; ++i) line += "," + format_double(tr.s(i));
    for (Index i = 0; i < kActionDim; ++i) line += "," + format_double(tr.a(i));
    line += "," + format_double(tr.r);
    for (Index i = 0; i < kStateDim; ++i) line += "," + format_double(tr.s_next(i));
    line += tr.done ? ",1\n" : ",0\n";
    out << line;
  }
}

namespace {

double parse_double(const std::string& field, std::size_t line) {
  char* end = nullptr;
  const double v = std::strtod(field.c_str(), &end);
  if (field.empty() || end != field.c_str() + field.size())
    throw std::runtime_error("csv line " + std::to_string(line) + ": bad number '" + field + "'");
  return v;
}

}  // namespace

OfflineDataset read_csv(std::istream& in, Domain domain) {
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw std::runtime_error("csv: missing or unexpected header");
  OfflineDataset data(domain);
  std::size_t lineno = 1;
  std::vector<std::string> fields;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    fields.clear();
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() != 14)
      throw std::runtime_error("csv line " + std::to_string(lineno) + ": expected 14 fields, got " +
                               std::to_string(fields.size()));
    Transition tr;
    tr.episode = static_cast<int>(parse_double(fields[0], lineno));
    tr.t = static_cast<int>(parse_double(fields[1], lineno));
    for (Index i = 0; i < kStateDim; ++i) tr.s(i) = parse_double(fields[2 + i], lineno);
    for (Index i = 0; i < kActionDim; ++i) tr.a(i) = parse_double(fields[6 + i], lineno);
    tr.r = parse_double(fields[8], lineno);
    for (Index i = 0; i < kStateDim; ++i) tr.s_next(i) = parse_double(fields[9 + i], lineno);
    tr.done = fields[13] == "1";
    data.push_back(tr);
  }
  return data;
}

void save_csv(const std::string& path, const OfflineDataset& dataset) {
  std::ostringstream ss;
  write_csv(ss, dataset);
  atomic_write(path, ss.str());
}

OfflineDataset load_csv(const std::string& path, Domain domain) {
  std::istringstream ss(read_file(path));
  return read_csv(ss, domain);
}

}  // namespace cedge::env

namespace cedge::env {

TransitionBatch TransitionBatch::rows(const std::vector<Index>& idx) const {
  TransitionBatch out;
  const Index n = static_cast<Index>(idx.size());
  out.s.resize(n, s.cols());
  out.a.resize(n, a.cols());
  out.s_next.resize(n, s_next.cols());
  out.r.resize(n);
  out.done.resize(n);
  for (Index i = 0; i < n; ++i) {
    const Index j = idx[static_cast<std::size_t>(i)];
    out.s.row(i) = s.row(j);
    out.a.row(i) = a.row(j);
    out.s_next.row(i) = s_next.row(j);
    out.r(i) = r(j);
    out.done(i) = done(j);
  }
  return out;
}

TransitionBatch TransitionBatch::concat(const TransitionBatch& x, const TransitionBatch& y) {
  if (x.size() == 0) return y;
  if (y.size() == 0) return x;
  TransitionBatch out;
  out.s.resize(x.size() + y.size(), x.s.cols());
  out.s << x.s, y.s;
  out.a.resize(x.size() + y.size(), x.a.cols());
  out.a << x.a, y.a;
  out.s_next.resize(x.size() + y.size(), x.s_next.cols());
  out.s_next << x.s_next, y.s_next;
  out.r.resize(x.size() + y.size());
  out.r << x.r, y.r;
  out.done.resize(x.size() + y.size());
  out.done << x.done, y.done;
  return out;
}

TransitionBatch make_transition_batch(const OfflineDataset& dataset, const Normalizer* normalizer) {
  TransitionBatch b;
  b.s = dataset.states();
  b.a = dataset.actions();
  b.s_next = dataset.next_states();
  b.r = dataset.rewards();
  b.done.resize(static_cast<Index>(dataset.size()));
  for (std::size_t i = 0; i < dataset.size(); ++i) b.done(static_cast<Index>(i)) = dataset[i].done ? 1.0 : 0.0;
  if (normalizer) {
    b.s = normalizer->normalize(b.s);
    b.s_next = normalizer->normalize(b.s_next);
  }
  return b;
}

}  // namespace cedge::env
