#include "fpbetter/bound.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "fpbetter/error.hpp"
#include "fpbetter/sampler.hpp"

namespace fpb {

IntensityReport intensity_from_norms(const std::vector<std::string>& layers,
                                     const std::vector<BatchGradientNorms>& batches) {
  IntensityReport report;
  report.batches = batches.size();
  report.layers.resize(layers.size());
  std::vector<bool> seen(layers.size(), false);
  for (std::size_t i = 0; i < layers.size(); ++i) report.layers[i].layer = layers[i];

  for (const auto& b : batches) {
    if (b.adversarial.size() != layers.size() || b.clean.size() != layers.size() ||
        b.active.size() != layers.size()) {
      throw ShapeError("gradient norms do not cover every layer");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (!b.active[i]) continue;
      seen[i] = true;
      report.layers[i].adversarial_norm = std::max(report.layers[i].adversarial_norm, b.adversarial[i]);
      report.layers[i].clean_norm = std::max(report.layers[i].clean_norm, b.clean[i]);
    }
    report.adversarial_norm = std::max(report.adversarial_norm, b.adversarial_total);
    report.clean_norm = std::max(report.clean_norm, b.clean_total);
  }

  for (std::size_t i = 0; i < layers.size(); ++i) {
    LayerIntensity& l = report.layers[i];
    if (!seen[i]) {
      l.ratio = 1.0;
      l.status = LayerStatus::dropped;
    } else if (l.clean_norm == 0.0) {
      l.ratio = std::numeric_limits<double>::quiet_NaN();
      l.status = LayerStatus::undefined;
    } else {
      l.ratio = l.adversarial_norm / l.clean_norm;
    }
  }
  report.intensity = report.clean_norm == 0.0 ? std::numeric_limits<double>::quiet_NaN()
                                              : report.adversarial_norm / report.clean_norm;
  return report;
}

namespace {

struct ParamGradients {
  std::vector<Tensor> grads;
  std::vector<bool> active;
};

ParamGradients parameter_gradients(const NetworkSpec& spec, const ParameterSet& params,
                                   const Tensor& inputs, const std::vector<int>& labels,
                                   const BlockMask& mask) {
  ForwardPass pass = forward(spec, params, inputs, mask);
  const NodeId loss = pass.graph.softmax_cross_entropy(pass.logits, labels);
  const Gradients g = pass.graph.backward(loss);
  ParamGradients out;
  out.active = pass.param_active;
  for (std::size_t i = 0; i < params.size(); ++i) out.grads.push_back(g.at(pass.params[i]));
  return out;
}

double group_norm(const ParamGradients& g, const std::vector<std::size_t>& members) {
  double s = 0.0;
  for (auto i : members) {
    for (double v : g.grads[i].data()) s += v * v;
  }
  return std::sqrt(s);
}

double total_norm(const ParamGradients& g) {
  double s = 0.0;
  for (const auto& t : g.grads) {
    for (double v : t.data()) s += v * v;
  }
  return std::sqrt(s);
}

Tensor perturb(const NetworkSpec& spec, const ParameterSet& params, const BlockMask& mask,
               const Batch& batch, const AttackConfig& attack, Rng& rng) {
  if (attack.steps > 1) {
    return pgd(network_objective(spec, params, batch.labels, mask), batch.inputs, attack, rng);
  }
  return fgsm(spec, params, mask, batch.inputs, batch.labels, attack, rng);
}

}  // namespace

IntensityReport layerwise_intensity(const NetworkSpec& spec, const ParameterSet& params,
                                    const Dataset& data, const AttackConfig& attack, MaskMode mode,
                                    std::span<const double> survival, std::size_t batch_size,
                                    std::uint64_t seed) {
  if (data.size() == 0) throw DomainError("layerwise_intensity: empty dataset");
  if (mode == MaskMode::subnetwork && survival.size() != spec.block_count()) {
    throw DomainError("layerwise_intensity: subnetwork mode needs one survival probability per block");
  }
  const auto groups = layer_groups(spec, params);
  std::vector<std::string> names;
  for (const auto& g : groups) names.push_back(g.name);

  Rng mask_rng = Rng::stream(seed, StreamId::masks, 0);
  Rng attack_rng = Rng::stream(seed, StreamId::bound, 0);
  std::vector<BatchGradientNorms> scanned;
  for (const Batch& batch : ordered_batches(data, batch_size)) {
    const BlockMask mask = mode == MaskMode::subnetwork ? sample_mask(survival, mask_rng)
                                                        : BlockMask::all_ones(spec.block_count());
    const Tensor delta = perturb(spec, params, mask, batch, attack, attack_rng);
    const auto adv = parameter_gradients(spec, params, batch.inputs + delta, batch.labels, mask);
    const auto clean = parameter_gradients(spec, params, batch.inputs, batch.labels, mask);

    BatchGradientNorms norms;
    for (const auto& g : groups) {
      norms.adversarial.push_back(group_norm(adv, g.params));
      norms.clean.push_back(group_norm(clean, g.params));
      norms.active.push_back(adv.active[g.params.front()]);
    }
    norms.adversarial_total = total_norm(adv);
    norms.clean_total = total_norm(clean);
    scanned.push_back(std::move(norms));
  }
  IntensityReport report = intensity_from_norms(names, scanned);
  report.scope = "max over " + std::to_string(scanned.size()) + " ordered batches of " +
                 std::to_string(data.size()) + " training examples at fixed parameters (" +
                 (mode == MaskMode::subnetwork ? "sampled subnetworks" : "full network") + ")";
  return report;
}

double epsilon0(std::span<const double> ratios, double l_erm, double samples, double laplace_b) {
  if (!(samples > 0.0)) throw DomainError("epsilon0: N must be positive");
  if (!(laplace_b > 0.0)) throw DomainError("epsilon0: Laplace parameter b must be positive");
  if (!(l_erm >= 0.0) || !std::isfinite(l_erm)) throw DomainError("epsilon0: L_ERM must be finite and >= 0");
  double product = 1.0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw DomainError("epsilon0: ratios must be finite and >= 0");
    product *= r;
  }
  return (2.0 * l_erm / (samples * laplace_b)) * product;
}

PrivacyLoss privacy_epsilon(double eps0, double iterations, double samples, double delta_prime) {
  if (!(eps0 >= 0.0) || !std::isfinite(eps0)) throw DomainError("privacy_epsilon: eps0 must be >= 0");
  if (!(iterations >= 1.0)) throw DomainError("privacy_epsilon: T must be >= 1");
  if (!(delta_prime > 0.0 && delta_prime < samples)) {
    throw DomainError("privacy_epsilon: need 0 < delta' < N");
  }
  PrivacyLoss out;
  out.epsilon = eps0 * std::sqrt(2.0 * iterations * std::log(samples / delta_prime)) +
                iterations * eps0 * std::expm1(eps0);
  out.delta = delta_prime / samples;
  return out;
}

double generalization_bound(double epsilon, double delta, double loss_bound, double samples,
                            double gamma, double c) {
  if (!(epsilon >= 0.0) || !(delta >= 0.0) || !(loss_bound >= 0.0)) {
    throw DomainError("generalization_bound: epsilon, delta and M must be >= 0");
  }
  if (!(samples >= 1.0)) throw DomainError("generalization_bound: N must be >= 1");
  if (!(gamma > 0.0 && gamma < 1.0)) throw DomainError("generalization_bound: gamma must lie in (0, 1)");
  const double leak = 1.0 - std::exp(-epsilon) + std::exp(-epsilon) * delta;
  const double privacy_term = loss_bound * leak * std::log(samples) * std::log(samples / gamma);
  const double sampling_term = std::sqrt(std::log(1.0 / gamma) / samples);
  return c * (privacy_term + sampling_term);
}

double laplace_scale(const std::vector<std::vector<double>>& samples, std::span<const double> center) {
  if (samples.empty()) throw DomainError("laplace_scale: no samples");
  if (center.empty()) throw DomainError("laplace_scale: empty center");
  double total = 0.0;
  for (std::size_t c = 0; c < center.size(); ++c) {
    double dev = 0.0;
    for (const auto& s : samples) {
      if (s.size() != center.size()) throw ShapeError("laplace_scale: sample size mismatch");
      dev += std::abs(s[c] - center[c]);
    }
    total += dev / static_cast<double>(samples.size());
  }
  return total / static_cast<double>(center.size());
}

namespace {

std::vector<double> flat_gradient(const NetworkSpec& spec, const ParameterSet& params,
                                  const Tensor& inputs, const std::vector<int>& labels) {
  const auto g = parameter_gradients(spec, params, inputs, labels, BlockMask::all_ones(spec.block_count()));
  std::vector<double> out;
  out.reserve(params.element_count());
  for (const auto& t : g.grads) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

}  // namespace

double estimate_laplace_b(const NetworkSpec& spec, const ParameterSet& params, const Dataset& data,
                          std::size_t batch_size, std::size_t batches, const AttackConfig& attack,
                          std::uint64_t seed) {
  if (data.size() == 0) throw DomainError("estimate_laplace_b: empty dataset");
  if (batches < 2) throw DomainError("estimate_laplace_b: need at least two minibatches");

  // Perturb the whole training set once, then compare minibatch gradients of
  // that adversarial set with its full-batch gradient.
  Dataset adversarial = data;
  Rng rng = Rng::stream(seed, StreamId::bound, 1);
  const BlockMask full = BlockMask::all_ones(spec.block_count());
  const std::size_t row = data.examples.size() / data.size();
  for (const Batch& batch : ordered_batches(data, 256)) {
    const Tensor delta = perturb(spec, params, full, batch, attack, rng);
    for (std::size_t r = 0; r < batch.indices.size(); ++r) {
      for (std::size_t k = 0; k < row; ++k) {
        adversarial.examples[batch.indices[r] * row + k] += delta[r * row + k];
      }
    }
  }

  std::vector<double> center(params.element_count(), 0.0);
  for (const Batch& batch : ordered_batches(adversarial, 256)) {
    const auto g = flat_gradient(spec, params, batch.inputs, batch.labels);
    const double weight = static_cast<double>(batch.labels.size()) / static_cast<double>(data.size());
    for (std::size_t i = 0; i < g.size(); ++i) center[i] += weight * g[i];
  }

  std::vector<std::vector<double>> samples;
  for (std::size_t k = 0; k < batches; ++k) {
    const auto shuffled = minibatches(adversarial, batch_size, seed, k);
    samples.push_back(flat_gradient(spec, params, shuffled.front().inputs, shuffled.front().labels));
  }
  return laplace_scale(samples, center);
}

BoundReport compute_bound(const BoundInputs& inputs) {
  BoundReport report;
  report.inputs = inputs;
  std::vector<double> ratios;
  for (const auto& l : inputs.intensity.layers) {
    if (l.status == LayerStatus::undefined) {
      if (inputs.exclude_undefined) continue;
      throw DomainError("layer '" + l.layer + "' has zero clean gradient norm; ratio undefined");
    }
    ratios.push_back(l.ratio);
  }
  report.factors_used = ratios.size();
  report.epsilon0 = epsilon0(ratios, inputs.l_erm, inputs.samples, inputs.laplace_b);
  const PrivacyLoss privacy =
      privacy_epsilon(report.epsilon0, inputs.iterations, inputs.samples, inputs.delta_prime);
  report.epsilon = privacy.epsilon;
  report.delta = privacy.delta;
  report.bound = generalization_bound(report.epsilon, report.delta, inputs.loss_bound, inputs.samples,
                                      inputs.gamma, inputs.c);
  return report;
}

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string_view status_name(LayerStatus s) {
  switch (s) {
    case LayerStatus::ok: return "ok";
    case LayerStatus::dropped: return "dropped";
    case LayerStatus::undefined: return "undefined";
  }
  return "unknown";
}

}  // namespace

std::string format_bound_report(const BoundReport& r) {
  std::ostringstream out;
  const BoundInputs& in = r.inputs;
  out << "# generalization bound report; values hold up to the universal constant c\n";
  out << "T = " << num(in.iterations) << '\n';
  out << "N = " << num(in.samples) << '\n';
  out << "delta_prime = " << num(in.delta_prime) << '\n';
  out << "laplace_b = " << num(in.laplace_b) << '\n';
  out << "L_ERM = " << num(in.l_erm) << '\n';
  out << "M = " << num(in.loss_bound) << '\n';
  out << "gamma = " << num(in.gamma) << '\n';
  out << "c = " << num(in.c) << '\n';
  out << "batch_size = " << in.batch_size << " (recorded, unused by the formulas)\n";
  out << "intensity.scope = " << in.intensity.scope << '\n';
  out << "intensity.batches = " << in.intensity.batches << '\n';
  out << "intensity.adv_norm = " << num(in.intensity.adversarial_norm) << '\n';
  out << "intensity.clean_norm = " << num(in.intensity.clean_norm) << '\n';
  out << "intensity.I = " << num(in.intensity.intensity) << '\n';
  for (const auto& l : in.intensity.layers) {
    out << "layer." << l.layer << ".adv_norm = " << num(l.adversarial_norm) << '\n';
    out << "layer." << l.layer << ".clean_norm = " << num(l.clean_norm) << '\n';
    out << "layer." << l.layer << ".ratio = " << num(l.ratio) << '\n';
    out << "layer." << l.layer << ".status = " << status_name(l.status) << '\n';
  }
  out << "factors_used = " << r.factors_used << '\n';
  out << "epsilon0 = " << num(r.epsilon0) << '\n';
  out << "epsilon = " << num(r.epsilon) << '\n';
  out << "delta = " << num(r.delta) << '\n';
  out << "bound = " << num(r.bound) << '\n';
  return out.str();
}

}  // namespace fpb
