#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fpbetter/attack.hpp"
#include "fpbetter/dataset.hpp"
#include "fpbetter/model.hpp"

namespace fpb {

struct EvalReport {
  std::string tag;
  std::size_t examples = 0;
  double clean_accuracy = 0.0;
  double empirical_risk = 0.0;
  /// (attack name, robust accuracy) in the order requested.
  std::vector<std::pair<std::string, double>> robust;
};

inline constexpr std::size_t kEvalBatch = 256;

/// Fraction of examples whose argmax logit (ties to the lowest class) equals
/// the label, on the full network.
double accuracy(const NetworkSpec& spec, const ParameterSet& params, const Dataset& data,
                const Scaling& scaling = Scaling::none(), std::size_t batch_size = kEvalBatch);

/// Accuracy on x + pgd(x), attacking the full network. Uniform init draws
/// from a per-batch eval stream of `seed`, so the result does not depend on
/// the thread count.
double robust_accuracy(const NetworkSpec& spec, const ParameterSet& params, const Dataset& data,
                       const AttackConfig& attack, std::uint64_t seed = 0,
                       const Scaling& scaling = Scaling::none(),
                       std::size_t batch_size = kEvalBatch);

std::vector<double> per_example_losses(const NetworkSpec& spec, const ParameterSet& params,
                                       const Dataset& data, const Scaling& scaling = Scaling::none(),
                                       std::size_t batch_size = kEvalBatch);

/// Mean per-example cross-entropy, summed in dataset order.
double empirical_risk(const NetworkSpec& spec, const ParameterSet& params, const Dataset& data,
                      const Scaling& scaling = Scaling::none(), std::size_t batch_size = kEvalBatch);

using NamedAttack = std::pair<std::string, AttackConfig>;

/// Clean accuracy, empirical risk and one robust accuracy per attack.
EvalReport evaluate(const std::string& tag, const NetworkSpec& spec, const ParameterSet& params,
                    const Dataset& data, const std::vector<NamedAttack>& attacks,
                    std::uint64_t seed = 0, const Scaling& scaling = Scaling::none());

inline constexpr double kCollapsePeak = 0.20;
inline constexpr double kCollapseFloor = 0.05;

/// First epoch index whose robust accuracy is below `floor` while some earlier
/// epoch reached at least `peak`.
std::optional<std::size_t> overfitting_monitor(std::span<const double> robust_history,
                                               double peak = kCollapsePeak,
                                               double floor = kCollapseFloor);

struct Landscape {
  std::size_t grid = 0;
  /// Coefficients in [-epsilon, epsilon] shared by both axes.
  std::vector<double> coefficients;
  /// loss[i * grid + j] at x + a_i * adv / epsilon + b_j * rad / epsilon.
  std::vector<double> loss;
  Tensor adversarial_direction;
  Tensor rademacher_direction;
  double epsilon = 0.0;
};

/// Loss over the plane spanned by a PGD-`pgd_steps` direction rescaled to
/// infinity-norm epsilon and an epsilon-scaled Rademacher direction.
/// `grid` must be odd and >= 3 so that the origin is a grid point.
Landscape loss_landscape(const InputObjective& objective, const Tensor& example, double epsilon,
                         std::size_t grid, Rng& rng, std::size_t pgd_steps = 100);

Landscape loss_landscape(const NetworkSpec& spec, const ParameterSet& params, const Tensor& example,
                         int label, double epsilon, std::size_t grid, std::uint64_t seed);

/// Header: tag,examples,clean_accuracy,empirical_risk,robust:<name>...
void write_eval_csv(std::ostream& out, const std::vector<EvalReport>& reports);
/// Header: row,col,adv_coef,rad_coef,loss; rows in row-major order.
void write_landscape_csv(std::ostream& out, const Landscape& landscape);

}  // namespace fpb
