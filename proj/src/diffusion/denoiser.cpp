#include "cedge/diffusion/denoiser.hpp"

namespace cedge::diffusion {

DenoiserKind parse_denoiser_kind(const std::string& name) {
  if (name == "dense") return DenoiserKind::kDense;
  if (name == "conv") return DenoiserKind::kConv;
  throw ConfigError("unknown denoiser architecture '" + name + "' (expected dense or conv)");
}

std::string denoiser_kind_name(DenoiserKind kind) { return kind == DenoiserKind::kDense ? "dense" : "conv"; }

Denoiser::Denoiser(DenoiserArch arch, std::uint64_t seed) : arch_(arch) {
  if (arch_.horizon < 2) throw ConfigError("denoiser: horizon must be at least 2");
  RngStream rng(seed, 0x64656e6fULL);
  if (arch_.kind == DenoiserKind::kDense) {
    mlp_ = Mlp("denoiser", {arch_.width() + arch_.embed_dim, arch_.hidden, arch_.hidden, arch_.width()});
    mlp_.init(params_, rng);
  } else {
    conv_ = ConvStack("denoiser", {arch_.transition_dim() + arch_.embed_dim, arch_.channels, arch_.channels,
                                   arch_.transition_dim()},
                      arch_.kernel);
    conv_.init(params_, rng);
  }
  ema_ = params_;
}

ad::Var Denoiser::apply(ad::Tape& tape, const ParameterStore& store, ad::Var tau, ad::Var steps) const {
  const Index batch = tape.value(tau).rows();
  if (tape.value(tau).cols() != arch_.width())
    throw ShapeError("denoiser: expected segments of width " + std::to_string(arch_.width()) + ", got " +
                     shape_string(tape.value(tau)));
  ad::Var emb = tape.timestep_embedding(steps, arch_.embed_dim);
  if (arch_.kind == DenoiserKind::kDense) return mlp_.apply(tape, store, tape.concat_cols({tau, emb}));

  const Index H = arch_.horizon;
  ad::Var rows = tape.reshape(tau, batch * H, arch_.transition_dim());
  std::vector<Index> owner(static_cast<std::size_t>(batch * H));
  for (Index i = 0; i < batch * H; ++i) owner[static_cast<std::size_t>(i)] = i / H;
  ad::Var emb_rows = tape.gather_rows(emb, std::move(owner));
  ad::Var out = conv_.apply(tape, store, tape.concat_cols({rows, emb_rows}), H);
  return tape.reshape(out, batch, arch_.width());
}

Matrix Denoiser::predict(const ParameterStore& store, const Matrix& tau_k, int k) const {
  ad::Tape tape;
  ad::Var tau = tape.constant(tau_k);
  ad::Var steps = tape.constant(Matrix::Constant(tau_k.rows(), 1, static_cast<double>(k)));
  return tape.value(apply(tape, store, tau, steps));
}

Matrix Denoiser::predict(const Matrix& tau_k, int k, bool use_ema) const {
  return predict(use_ema ? ema_ : params_, tau_k, k);
}

}  // namespace cedge::diffusion
