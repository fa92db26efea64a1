#include "cedge/diffusion/denoiser.hpp"

#include <cmath>

namespace cedge::diffusion {

void train_denoiser(Denoiser& model, const Matrix& segments, const NoiseSchedule& schedule,
                    const DiffusionTrainConfig& config, std::vector<double>* loss_history, Adam* optimizer) {
  if (segments.rows() == 0) throw UsageError("train_denoiser: no segments");
  if (segments.cols() != model.arch().width())
    throw ShapeError("train_denoiser: segment width " + std::to_string(segments.cols()) + " does not match model width " +
                     std::to_string(model.arch().width()));
  RngStream rng(config.seed, 0x747261696eULL);
  Adam local(config.adam);
  Adam& adam = optimizer ? *optimizer : local;
  const Index B = config.batch;
  const Index W = segments.cols();
  const int T = schedule.steps();
  Matrix tau0(B, W), noise(B, W), tau_k(B, W), steps(B, 1);
  for (long it = 0; it < config.steps; ++it) {
    for (Index b = 0; b < B; ++b) {
      tau0.row(b) = segments.row(rng.index(segments.rows()));
      const int k = 1 + static_cast<int>(rng.index(T));
      steps(b, 0) = k;
      for (Index j = 0; j < W; ++j) noise(b, j) = rng.normal();
      const double ab = schedule.alpha_bar(k);
      tau_k.row(b) = std::sqrt(ab) * tau0.row(b) + std::sqrt(1.0 - ab) * noise.row(b);
    }
    ad::Tape tape;
    ad::Var x = tape.constant(tau_k);
    ad::Var kk = tape.constant(steps);
    ad::Var pred = model.apply(tape, model.params(), x, kk);
    ad::Var loss = tape.mean(tape.square(tape.sub(pred, tape.constant(tau0))));
    if (loss_history) loss_history->push_back(tape.scalar(loss));
    auto grads = tape.backward(loss);
    if (config.cosine_lr) adam.set_lr(cosine_lr(config.adam.lr, it, config.steps));
    adam.step(model.params(), grads.params);
    double decay = config.ema_decay;
    if (config.ema_warmup) decay = std::min(decay, (1.0 + static_cast<double>(it)) / (10.0 + static_cast<double>(it)));
    ema_update(model.ema(), model.params(), decay);
  }
}

}  // namespace cedge::diffusion
