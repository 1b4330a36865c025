#include "fpbetter/attack.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fpbetter/error.hpp"

namespace fpb {

std::string_view to_string(AttackInit init) noexcept {
  return init == AttackInit::zero ? "zero" : "uniform";
}

AttackInit parse_attack_init(std::string_view text) {
  if (text == "zero") return AttackInit::zero;
  if (text == "uniform") return AttackInit::uniform;
  throw ConfigError("unknown attack init '" + std::string(text) + "'");
}

void AttackConfig::validate() const {
  if (!std::isfinite(epsilon) || epsilon < 0.0) throw DomainError("attack epsilon must be finite and >= 0");
  if (!std::isfinite(alpha) || alpha <= 0.0) throw DomainError("attack step size must be finite and > 0");
  if (steps == 0) throw DomainError("attack needs at least one step");
  if (clip && !(clip_lo < clip_hi)) throw DomainError("attack clip range is empty");
}

InputObjective network_objective(const NetworkSpec& spec, const ParameterSet& params,
                                 const std::vector<int>& labels, BlockMask mask,
                                 Scaling scaling) {
  return [&spec, &params, &labels, mask = std::move(mask),
          scaling = std::move(scaling)](const Tensor& input) {
    ForwardPass pass = forward(spec, params, input, mask, scaling, true);
    const NodeId loss = pass.graph.softmax_cross_entropy(pass.logits, labels);
    LossGradient out;
    out.loss = pass.graph.value(loss).item();
    if (!std::isfinite(out.loss)) throw NonFiniteError("non-finite attack loss", loss);
    out.input_grad = pass.graph.backward(loss).at(pass.input);
    return out;
  };
}

Tensor project_box(const Tensor& delta, double epsilon) {
  if (epsilon < 0.0) throw DomainError("project_box: epsilon must be >= 0");
  Tensor out = delta;
  for (double& v : out.data()) v = std::clamp(v, -epsilon, epsilon);
  return out;
}

double sign_of(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

namespace {

// Shrinks delta so that input + delta stays inside the data range. The box
// constraint wins for inputs that already lie outside the range.
void clip_to_range(Tensor& delta, const Tensor& input, const AttackConfig& config) {
  if (!config.clip) return;
  for (std::size_t i = 0; i < delta.size(); ++i) {
    const double moved = std::clamp(input[i] + delta[i], config.clip_lo, config.clip_hi) - input[i];
    delta[i] = std::clamp(moved, -config.epsilon, config.epsilon);
  }
}

Tensor initial_delta(const Tensor& input, const AttackConfig& config, Rng& rng) {
  Tensor delta(input.shape(), 0.0);
  if (config.init == AttackInit::uniform) {
    for (double& v : delta.data()) v = rng.uniform(-config.epsilon, config.epsilon);
    clip_to_range(delta, input, config);
  }
  return delta;
}

void sign_step(const InputObjective& objective, const Tensor& input, Tensor& delta,
               const AttackConfig& config) {
  const LossGradient lg = objective(input + delta);
  if (!lg.input_grad.all_finite()) throw NonFiniteError("non-finite input gradient in attack");
  if (lg.input_grad.shape() != input.shape()) throw ShapeError("attack gradient shape mismatch");
  for (std::size_t i = 0; i < delta.size(); ++i) {
    delta[i] = std::clamp(delta[i] + config.alpha * sign_of(lg.input_grad[i]), -config.epsilon,
                          config.epsilon);
  }
  clip_to_range(delta, input, config);
}

}  // namespace

Tensor fgsm(const InputObjective& objective, const Tensor& input, const AttackConfig& config,
            Rng& rng) {
  config.validate();
  Tensor delta = initial_delta(input, config, rng);
  sign_step(objective, input, delta, config);
  return delta;
}

Tensor pgd(const InputObjective& objective, const Tensor& input, const AttackConfig& config,
           Rng& rng) {
  config.validate();
  Tensor delta = initial_delta(input, config, rng);
  for (std::size_t k = 0; k < config.steps; ++k) sign_step(objective, input, delta, config);
  return delta;
}

Tensor fgsm(const NetworkSpec& spec, const ParameterSet& params, const BlockMask& mask,
            const Tensor& batch, const std::vector<int>& labels, const AttackConfig& config,
            Rng& rng) {
  return fgsm(network_objective(spec, params, labels, mask), batch, config, rng);
}

Tensor pgd(const NetworkSpec& spec, const ParameterSet& params, const Tensor& batch,
           const std::vector<int>& labels, const AttackConfig& config, Rng& rng,
           const Scaling& scaling) {
  return pgd(network_objective(spec, params, labels, BlockMask::all_ones(spec.block_count()), scaling),
             batch, config, rng);
}

}  // namespace fpb
