#pragma once

#include <cstddef>
#include <functional>
#include <string_view>
#include <vector>

#include "fpbetter/model.hpp"
#include "fpbetter/rng.hpp"
#include "fpbetter/tensor.hpp"

namespace fpb {

enum class AttackInit { zero, uniform };

std::string_view to_string(AttackInit init) noexcept;
AttackInit parse_attack_init(std::string_view text);

/// L-infinity attack settings.
struct AttackConfig {
  double epsilon = 8.0 / 255.0;
  double alpha = 10.0 / 255.0;
  std::size_t steps = 1;
  AttackInit init = AttackInit::uniform;
  bool clip = false;
  double clip_lo = 0.0;
  double clip_hi = 1.0;

  /// Throws DomainError on negative/non-finite epsilon, alpha <= 0 or
  /// steps == 0.
  void validate() const;
};

/// Loss of a batch together with its gradient with respect to the input.
struct LossGradient {
  double loss = 0.0;
  Tensor input_grad;
};

/// Differentiable objective in input space.
using InputObjective = std::function<LossGradient(const Tensor& input)>;

/// Mean cross-entropy of the (masked) network as a function of its input.
/// Captures references: spec, params and labels must outlive the objective.
InputObjective network_objective(const NetworkSpec& spec, const ParameterSet& params,
                                 const std::vector<int>& labels, BlockMask mask,
                                 Scaling scaling = Scaling::none());

/// Elementwise clamp to [-epsilon, epsilon].
Tensor project_box(const Tensor& delta, double epsilon);

/// sign(v) with sign(0) = 0.
double sign_of(double v) noexcept;

/// Single step from phi: delta = clamp(phi + alpha * sign(grad at x + phi)).
/// `config.steps` is ignored. With clipping enabled, x + delta is kept inside
/// [clip_lo, clip_hi] by shrinking delta.
Tensor fgsm(const InputObjective& objective, const Tensor& input, const AttackConfig& config,
            Rng& rng);

/// `config.steps` projected sign-gradient steps starting from the configured
/// initialization.
Tensor pgd(const InputObjective& objective, const Tensor& input, const AttackConfig& config,
           Rng& rng);

/// FGSM on the subnetwork selected by `mask`.
Tensor fgsm(const NetworkSpec& spec, const ParameterSet& params, const BlockMask& mask,
            const Tensor& batch, const std::vector<int>& labels, const AttackConfig& config,
            Rng& rng);

/// PGD on the full network.
Tensor pgd(const NetworkSpec& spec, const ParameterSet& params, const Tensor& batch,
           const std::vector<int>& labels, const AttackConfig& config, Rng& rng,
           const Scaling& scaling = Scaling::none());

}  // namespace fpb
