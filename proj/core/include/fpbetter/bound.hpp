#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fpbetter/attack.hpp"
#include "fpbetter/dataset.hpp"
#include "fpbetter/model.hpp"

namespace fpb {

enum class MaskMode { full, subnetwork };

/// Gradient norms observed on one scanned batch, one entry per layer.
struct BatchGradientNorms {
  std::vector<double> adversarial;
  std::vector<double> clean;
  /// False for layers whose branch was dropped in this batch's mask.
  std::vector<bool> active;
  double adversarial_total = 0.0;
  double clean_total = 0.0;
};

enum class LayerStatus { ok, dropped, undefined };

struct LayerIntensity {
  std::string layer;
  double adversarial_norm = 0.0;  // max over scanned batches
  double clean_norm = 0.0;
  double ratio = 1.0;
  LayerStatus status = LayerStatus::ok;
};

struct IntensityReport {
  std::vector<LayerIntensity> layers;
  double adversarial_norm = 0.0;
  double clean_norm = 0.0;
  /// Robustified intensity over the full parameter vector.
  double intensity = 1.0;
  std::size_t batches = 0;
  std::string scope;
};

/// Max-over-batches ratios. Layers inactive in every batch get ratio 1
/// (status dropped); layers with zero clean norm get NaN (status undefined).
IntensityReport intensity_from_norms(const std::vector<std::string>& layers,
                                     const std::vector<BatchGradientNorms>& batches);

/// Scans the dataset in order, comparing parameter gradients of the
/// adversarial loss (perturbation from `attack`, PGD when steps > 1) with those
/// of the clean loss at the supplied parameters. In subnetwork mode each batch
/// uses a mask drawn from `survival`.
IntensityReport layerwise_intensity(const NetworkSpec& spec, const ParameterSet& params,
                                    const Dataset& data, const AttackConfig& attack,
                                    MaskMode mode, std::span<const double> survival = {},
                                    std::size_t batch_size = 128, std::uint64_t seed = 0);

/// (2 L_ERM / (N b)) * prod(ratios).
double epsilon0(std::span<const double> ratios, double l_erm, double samples, double laplace_b);

struct PrivacyLoss {
  double epsilon = 0.0;
  double delta = 0.0;
};

/// epsilon = eps0 sqrt(2 T log(N / delta')) + T eps0 (e^eps0 - 1), delta = delta' / N.
PrivacyLoss privacy_epsilon(double eps0, double iterations, double samples, double delta_prime);

/// c (M (1 - e^-eps + e^-eps delta) log N log(N / gamma) + sqrt(log(1 / gamma) / N)).
double generalization_bound(double epsilon, double delta, double loss_bound, double samples,
                            double gamma, double c = 1.0);

/// Laplace maximum-likelihood scale around a known center: mean absolute
/// deviation per coordinate, averaged over coordinates.
double laplace_scale(const std::vector<std::vector<double>>& samples, std::span<const double> center);

/// Laplace scale of minibatch adversarial gradients around the full-dataset
/// adversarial gradient, using `batches` shuffled minibatches of `batch_size`.
double estimate_laplace_b(const NetworkSpec& spec, const ParameterSet& params, const Dataset& data,
                          std::size_t batch_size, std::size_t batches, const AttackConfig& attack,
                          std::uint64_t seed = 0);

struct BoundInputs {
  double iterations = 1.0;       // T
  double samples = 1.0;          // N
  double delta_prime = 1e-3;
  double laplace_b = 1.0;
  double l_erm = 1.0;
  double loss_bound = 1.0;       // M
  double gamma = 0.05;
  double c = 1.0;
  std::size_t batch_size = 0;    // recorded only
  IntensityReport intensity;
  /// Drop undefined ratios from the product instead of failing.
  bool exclude_undefined = false;
};

struct BoundReport {
  BoundInputs inputs;
  double epsilon0 = 0.0;
  double epsilon = 0.0;
  double delta = 0.0;
  double bound = 0.0;
  std::size_t factors_used = 0;
};

BoundReport compute_bound(const BoundInputs& inputs);

/// "key = value" lines, one per field and per layer.
std::string format_bound_report(const BoundReport& report);

}  // namespace fpb
