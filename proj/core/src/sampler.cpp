#include "fpbetter/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fpbetter/error.hpp"

namespace fpb {

std::string_view to_string(ScheduleMode mode) noexcept {
  return mode == ScheduleMode::linear ? "linear" : "uniform";
}

ScheduleMode parse_schedule_mode(std::string_view text) {
  if (text == "linear") return ScheduleMode::linear;
  if (text == "uniform") return ScheduleMode::uniform;
  throw ConfigError("unknown schedule mode '" + std::string(text) + "'");
}

std::vector<double> spatial_probabilities(std::size_t blocks, double p_min, ScheduleMode mode) {
  if (blocks == 0) throw DomainError("spatial_probabilities: need at least one block");
  if (!(p_min > 0.0 && p_min <= 1.0)) {
    throw DomainError("spatial_probabilities: p_min must lie in (0, 1], got " + std::to_string(p_min));
  }
  std::vector<double> p(blocks, p_min);
  if (mode == ScheduleMode::linear) {
    const double drop = 1.0 - p_min;
    const double depth = static_cast<double>(blocks);
    for (std::size_t l = 1; l <= blocks; ++l) {
      p[l - 1] = 1.0 - (static_cast<double>(l) / depth) * drop;
    }
  }
  return p;
}

BlockMask sample_mask(std::span<const double> survival, Rng& rng) {
  BlockMask mask;
  mask.bits.reserve(survival.size());
  for (double p : survival) mask.bits.push_back(rng.bernoulli(p) ? 1 : 0);
  return mask;
}

double expected_effective_blocks(std::span<const double> survival) noexcept {
  double total = 0.0;
  for (double p : survival) total += p;
  return total;
}

double temporal_update(const TemporalState& state, double p_min, double mu) noexcept {
  const double criterion = state.current_loss - state.previous_loss;
  if (criterion >= 0.0) return p_min;
  return std::min(p_min + mu, 1.0);
}

SubnetworkSampler::SubnetworkSampler(std::size_t blocks, ScheduleMode mode, double p_min, double mu)
    : blocks_(blocks), mode_(mode), p_min_(p_min), mu_(mu),
      survival_(spatial_probabilities(blocks, p_min, mode)) {
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw DomainError("adjusting factor must be finite and >= 0");
}

bool SubnetworkSampler::end_period() {
  const double before = p_min_;
  if (state_.periods_completed >= 1) {
    p_min_ = temporal_update(state_, p_min_, mu_);
    survival_ = spatial_probabilities(blocks_, p_min_, mode_);
  }
  state_.previous_loss = state_.current_loss;
  state_.current_loss = 0.0;
  state_.iterations_in_period = 0;
  ++state_.periods_completed;
  return p_min_ != before;
}

void SubnetworkSampler::restore(double p_min, const TemporalState& state) {
  survival_ = spatial_probabilities(blocks_, p_min, mode_);
  p_min_ = p_min;
  state_ = state;
}

}  // namespace fpb
