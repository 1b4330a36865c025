#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "fpbetter/model.hpp"
#include "fpbetter/rng.hpp"

namespace fpb {

enum class ScheduleMode { linear, uniform };

std::string_view to_string(ScheduleMode mode) noexcept;
ScheduleMode parse_schedule_mode(std::string_view text);

inline constexpr double kDefaultMinSurvival = 0.5;
inline constexpr double kDefaultAdjustingFactor = 0.04;

/// Survival probability per block. Linear: p_l = 1 - (l / L)(1 - p_min) for
/// l = 1..L, so the deepest block gets p_min. Uniform: p_l = p_min.
std::vector<double> spatial_probabilities(std::size_t blocks, double p_min, ScheduleMode mode);

/// Independent Bernoulli draw per block, in block order.
BlockMask sample_mask(std::span<const double> survival, Rng& rng);

/// Expected number of active blocks, sum of p_l.
double expected_effective_blocks(std::span<const double> survival) noexcept;

/// Cumulative adversarial losses of the previous and the current period.
struct TemporalState {
  double previous_loss = 0.0;
  double current_loss = 0.0;
  std::size_t iterations_in_period = 0;
  std::size_t periods_completed = 0;

  void accumulate(double loss) noexcept {
    current_loss += loss;
    ++iterations_in_period;
  }
  friend bool operator==(const TemporalState&, const TemporalState&) = default;
};

/// New p_min after one period: kept when current - previous >= 0, otherwise
/// raised by mu and clamped at 1.
double temporal_update(const TemporalState& state, double p_min, double mu) noexcept;

/// Spatial schedule plus temporal controller, owned by one training loop.
class SubnetworkSampler {
 public:
  SubnetworkSampler(std::size_t blocks, ScheduleMode mode, double p_min, double mu);

  std::size_t blocks() const noexcept { return blocks_; }
  ScheduleMode mode() const noexcept { return mode_; }
  double p_min() const noexcept { return p_min_; }
  double mu() const noexcept { return mu_; }
  const std::vector<double>& probabilities() const noexcept { return survival_; }
  double expected_blocks() const noexcept { return expected_effective_blocks(survival_); }
  const TemporalState& temporal() const noexcept { return state_; }

  BlockMask sample(Rng& rng) const { return sample_mask(survival_, rng); }
  void record_loss(double loss) noexcept { state_.accumulate(loss); }

  /// Closes the current period. From the second period on, applies the
  /// temporal update and rebuilds the schedule; then rolls the accumulators.
  /// Returns true when p_min changed.
  bool end_period();

  /// Restores a serialized state.
  void restore(double p_min, const TemporalState& state);

 private:
  std::size_t blocks_;
  ScheduleMode mode_;
  double p_min_;
  double mu_;
  std::vector<double> survival_;
  TemporalState state_;
};

}  // namespace fpb
