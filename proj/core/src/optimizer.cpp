#include "fpbetter/optimizer.hpp"

#include <cmath>

#include "fpbetter/error.hpp"

namespace fpb {

void sgd_momentum_step(Tensor& theta, const Tensor& grad, Tensor& velocity, const SgdOptions& options) {
  if (theta.shape() != grad.shape() || theta.shape() != velocity.shape()) {
    throw ShapeError("sgd_momentum_step: shape mismatch");
  }
  if (!grad.all_finite()) throw NonFiniteError("non-finite gradient in optimizer step");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i] + options.weight_decay * theta[i];
    velocity[i] = options.momentum * velocity[i] + g;
    theta[i] -= options.lr * velocity[i];
  }
}

double lr_at_epoch(double base_lr, double factor, const std::vector<double>& decay_fractions,
                   std::size_t epochs, std::size_t epoch) {
  double lr = base_lr;
  for (double fraction : decay_fractions) {
    // The slack keeps fractions written as k / epochs from landing on k - 1.
    const auto point =
        static_cast<std::size_t>(std::floor(fraction * static_cast<double>(epochs) + 1e-9));
    if (epoch >= point) lr *= factor;
  }
  return lr;
}

}  // namespace fpb
