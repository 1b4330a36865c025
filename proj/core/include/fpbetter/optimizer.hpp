#pragma once

#include <cstddef>
#include <vector>

#include "fpbetter/tensor.hpp"

namespace fpb {

struct SgdOptions {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
};

/// g' = g + wd * theta; v <- momentum * v + g'; theta <- theta - lr * v.
/// Throws NonFiniteError if the gradient is not finite.
void sgd_momentum_step(Tensor& theta, const Tensor& grad, Tensor& velocity, const SgdOptions& options);

/// Piecewise-constant schedule: base_lr * factor^k, where k counts the decay
/// points floor(fraction * epochs) that are <= epoch.
double lr_at_epoch(double base_lr, double factor, const std::vector<double>& decay_fractions,
                   std::size_t epochs, std::size_t epoch);

}  // namespace fpb
