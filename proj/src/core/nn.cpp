#include "cedge/core/nn.hpp"

#include <cmath>
#include <numbers>

namespace cedge {

Matrix& ParameterStore::add(const std::string& name, Matrix value) {
  auto [it, inserted] = values_.insert_or_assign(name, std::move(value));
  (void)inserted;
  return it->second;
}

Matrix& ParameterStore::at(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

const Matrix& ParameterStore::at(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw UsageError("unknown parameter '" + name + "'");
  return it->second;
}

Index ParameterStore::parameter_count() const {
  Index n = 0;
  for (const auto& [name, m] : values_) n += m.size();
  return n;
}

bool ParameterStore::operator==(const ParameterStore& other) const {
  if (values_.size() != other.values_.size()) return false;
  for (const auto& [name, m] : values_) {
    auto it = other.values_.find(name);
    if (it == other.values_.end()) return false;
    if (m.rows() != it->second.rows() || m.cols() != it->second.cols()) return false;
    if (m != it->second) return false;
  }
  return true;
}

void Adam::step(ParameterStore& params, const std::map<std::string, Matrix>& grads) {
  for (const auto& [name, g] : grads) {
    const Matrix& p = params.at(name);
    if (g.rows() != p.rows() || g.cols() != p.cols())
      throw ShapeError("adam: gradient for '" + name + "' is " + shape_string(g) + ", parameter is " + shape_string(p));
    if (!g.allFinite()) throw NumericError("adam: non-finite gradient for '" + name + "'");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto [mit, m_new] = m_.try_emplace(name, Matrix::Zero(p.rows(), p.cols()));
    auto [vit, v_new] = v_.try_emplace(name, Matrix::Zero(p.rows(), p.cols()));
    (void)m_new;
    (void)v_new;
    Matrix& m = mit->second;
    Matrix& v = vit->second;
    auto git = grads.find(name);
    if (git != grads.end()) {
      m = config_.beta1 * m + (1.0 - config_.beta1) * git->second;
      v = config_.beta2 * v + (1.0 - config_.beta2) * git->second.cwiseAbs2();
    } else {
      m *= config_.beta1;
      v *= config_.beta2;
    }
    if (config_.weight_decay != 0.0) p *= 1.0 - config_.lr * config_.weight_decay;
    p.array() -= config_.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + config_.eps);
  }
}

void Adam::restore(long t, std::map<std::string, Matrix> m, std::map<std::string, Matrix> v) {
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

void ema_update(ParameterStore& shadow, const ParameterStore& params, double decay) {
  for (auto& [name, s] : shadow) s = decay * s + (1.0 - decay) * params.at(name);
}

double cosine_lr(double base, long step, long total) {
  if (total <= 0) return base;
  const double frac = std::min(1.0, static_cast<double>(step) / static_cast<double>(total));
  return 0.5 * base * (1.0 + std::cos(frac * std::numbers::pi));
}

Matrix uniform_init(Index rows, Index cols, Index fan_in, RngStream& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

ad::Var activate(ad::Tape& tape, ad::Var x, Activation act) {
  switch (act) {
    case Activation::kRelu:
      return tape.relu(x);
    case Activation::kTanh:
      return tape.tanh(x);
    case Activation::kSoftplus:
      return tape.softplus(x);
  }
  return x;
}

Mlp::Mlp(std::string prefix, std::vector<Index> sizes, Activation hidden)
    : prefix_(std::move(prefix)), sizes_(std::move(sizes)), hidden_(hidden) {
  if (sizes_.size() < 2) throw ConfigError("mlp '" + prefix_ + "' needs at least input and output sizes");
}

std::string Mlp::weight_name(std::size_t layer) const { return prefix_ + ".l" + std::to_string(layer) + ".weight"; }
std::string Mlp::bias_name(std::size_t layer) const { return prefix_ + ".l" + std::to_string(layer) + ".bias"; }

void Mlp::init(ParameterStore& store, RngStream& rng) const {
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
    store.add(weight_name(i), uniform_init(sizes_[i], sizes_[i + 1], sizes_[i], rng));
    store.add(bias_name(i), uniform_init(1, sizes_[i + 1], sizes_[i], rng));
  }
}

ad::Var Mlp::apply(ad::Tape& tape, const ParameterStore& store, ad::Var x) const {
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
    x = tape.affine(x, store.bind(tape, weight_name(i)), store.bind(tape, bias_name(i)));
    if (i + 2 < sizes_.size()) x = activate(tape, x, hidden_);
  }
  return x;
}

ConvStack::ConvStack(std::string prefix, std::vector<Index> channels, Index kernel, bool activate_last)
    : prefix_(std::move(prefix)), channels_(std::move(channels)), kernel_(kernel), activate_last_(activate_last) {
  if (channels_.size() < 2) throw ConfigError("conv stack '" + prefix_ + "' needs input and output channels");
  if (kernel_ < 1 || kernel_ % 2 == 0) throw ConfigError("conv stack '" + prefix_ + "' needs an odd kernel size");
}

void ConvStack::init(ParameterStore& store, RngStream& rng) const {
  for (std::size_t i = 0; i + 1 < channels_.size(); ++i) {
    const Index fan_in = kernel_ * channels_[i];
    const std::string base = prefix_ + ".c" + std::to_string(i);
    store.add(base + ".weight", uniform_init(fan_in, channels_[i + 1], fan_in, rng));
    store.add(base + ".bias", uniform_init(1, channels_[i + 1], fan_in, rng));
  }
}

ad::Var ConvStack::apply(ad::Tape& tape, const ParameterStore& store, ad::Var x, Index seq_len) const {
  for (std::size_t i = 0; i + 1 < channels_.size(); ++i) {
    const std::string base = prefix_ + ".c" + std::to_string(i);
    x = tape.conv1d(x, store.bind(tape, base + ".weight"), store.bind(tape, base + ".bias"), seq_len);
    if (i + 2 < channels_.size() || activate_last_) x = tape.relu(x);
  }
  return x;
}

}  // namespace cedge
