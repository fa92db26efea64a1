#pragma once

#include "cedge/core/tape.hpp"
#include "cedge/core/tensor.hpp"

#include <cmath>
#include <map>
#include <string>

namespace cedge {

// Named parameter arrays. Names are layer-indexed ("mlp.l0.weight") and are
// preserved verbatim by checkpoints.
class ParameterStore {
 public:
  using Map = std::map<std::string, Matrix>;

  Matrix& add(const std::string& name, Matrix value);
  Matrix& at(const std::string& name);
  const Matrix& at(const std::string& name) const;
  bool contains(const std::string& name) const { return values_.count(name) != 0; }
  std::size_t size() const { return values_.size(); }
  Index parameter_count() const;

  Map::iterator begin() { return values_.begin(); }
  Map::iterator end() { return values_.end(); }
  Map::const_iterator begin() const { return values_.begin(); }
  Map::const_iterator end() const { return values_.end(); }

  ad::Var bind(ad::Tape& tape, const std::string& name) const { return tape.parameter(name, at(name)); }

  bool operator==(const ParameterStore& other) const;

 private:
  Map values_;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// Bias-corrected Adam with decoupled weight decay (AdamW).
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig config) : config_(config) {}

  // Parameters absent from `grads` take a zero gradient. Throws NumericError
  // (leaving every parameter untouched) if any gradient is non-finite.
  void step(ParameterStore& params, const std::map<std::string, Matrix>& grads);

  long steps() const { return t_; }
  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  const std::map<std::string, Matrix>& first_moments() const { return m_; }
  const std::map<std::string, Matrix>& second_moments() const { return v_; }
  void restore(long t, std::map<std::string, Matrix> m, std::map<std::string, Matrix> v);

 private:
  AdamConfig config_;
  long t_ = 0;
  std::map<std::string, Matrix> m_;
  std::map<std::string, Matrix> v_;
};

// shadow <- decay * shadow + (1 - decay) * params, over matching names.
void ema_update(ParameterStore& shadow, const ParameterStore& params, double decay);

// Cosine annealing from base to 0 over total steps.
double cosine_lr(double base, long step, long total);

}  // namespace cedge
