#pragma once

#include <cmath>
#include <span>

#include "monet/core/errors.hpp"
#include "monet/core/param.hpp"

namespace monet {

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One bias-corrected Adam update; weight_decay > 0 gives the decoupled
/// (AdamW) variant. Clears the gradient afterwards.
inline void adam_step(ParamBlock& block, double lr, const AdamHyper& hyper = {}, double weight_decay = 0.0) {
  if (!(lr > 0.0)) {
    throw DomainError("adam_step: learning rate must be positive");
  }
  if (!block.grad.allFinite()) {
    throw NumericError("adam_step: non-finite gradient in block '" + block.name + "'");
  }
  ++block.step;
  const double t = static_cast<double>(block.step);
  const double c1 = 1.0 - std::pow(hyper.beta1, t);
  const double c2 = 1.0 - std::pow(hyper.beta2, t);
  block.m1 = hyper.beta1 * block.m1 + (1.0 - hyper.beta1) * block.grad;
  block.m2 = hyper.beta2 * block.m2 + (1.0 - hyper.beta2) * block.grad.cwiseProduct(block.grad);
  if (weight_decay != 0.0) {
    block.value *= (1.0 - lr * weight_decay);
  }
  block.value.array() -= lr * (block.m1.array() / c1) / ((block.m2.array() / c2).sqrt() + hyper.eps);
  block.zero_grad();
}

inline void adam_step(std::span<ParamBlock* const> blocks, double lr, const AdamHyper& hyper = {},
                      double weight_decay = 0.0) {
  for (ParamBlock* b : blocks) {
    adam_step(*b, lr, hyper, weight_decay);
  }
}

/// lr0 * beta^epoch, applied once per epoch.
inline double exp_decay(double lr0, double beta, long epoch) {
  return lr0 * std::pow(beta, static_cast<double>(epoch));
}

}  // namespace monet
