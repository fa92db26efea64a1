#pragma once

#include "cedge/core/params.hpp"
#include "cedge/core/rng.hpp"
#include "cedge/core/tape.hpp"

#include <string>
#include <vector>

namespace cedge {

enum class Activation { kRelu, kTanh, kSoftplus };

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
Matrix uniform_init(Index rows, Index cols, Index fan_in, RngStream& rng);

// Fully connected stack: relu between layers, linear output.
// Parameter names: <prefix>.l<i>.weight (in x out), <prefix>.l<i>.bias (1 x out).
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::string prefix, std::vector<Index> sizes, Activation hidden = Activation::kRelu);

  void init(ParameterStore& store, RngStream& rng) const;
  ad::Var apply(ad::Tape& tape, const ParameterStore& store, ad::Var x) const;

  const std::vector<Index>& sizes() const { return sizes_; }
  const std::string& prefix() const { return prefix_; }
  Index in_dim() const { return sizes_.front(); }
  Index out_dim() const { return sizes_.back(); }
  std::string weight_name(std::size_t layer) const;
  std::string bias_name(std::size_t layer) const;

 private:
  std::string prefix_;
  std::vector<Index> sizes_;
  Activation hidden_ = Activation::kRelu;
};

// Stack of same-padding temporal convolutions over sequences of `seq_len`
// rows, relu between layers. channels = {C_in, C_1, ..., C_out}.
class ConvStack {
 public:
  ConvStack() = default;
  ConvStack(std::string prefix, std::vector<Index> channels, Index kernel, bool activate_last = false);

  void init(ParameterStore& store, RngStream& rng) const;
  ad::Var apply(ad::Tape& tape, const ParameterStore& store, ad::Var x, Index seq_len) const;

  const std::vector<Index>& channels() const { return channels_; }
  Index kernel() const { return kernel_; }

 private:
  std::string prefix_;
  std::vector<Index> channels_;
  Index kernel_ = 3;
  bool activate_last_ = false;
};

ad::Var activate(ad::Tape& tape, ad::Var x, Activation act);

}  // namespace cedge
