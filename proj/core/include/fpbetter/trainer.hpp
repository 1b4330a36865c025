#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fpbetter/attack.hpp"
#include "fpbetter/checkpoint.hpp"
#include "fpbetter/dataset.hpp"
#include "fpbetter/model.hpp"
#include "fpbetter/optimizer.hpp"
#include "fpbetter/sampler.hpp"

namespace fpb {

enum class Method { fp_better, fgsm_rs, pgd_at, standard };
enum class UpdateTarget { subnetwork, full };

std::string_view to_string(Method method) noexcept;
Method parse_method(std::string_view text);
std::string_view to_string(UpdateTarget target) noexcept;
UpdateTarget parse_update_target(std::string_view text);

struct SamplerConfig {
  ScheduleMode mode = ScheduleMode::linear;
  double p_min = kDefaultMinSurvival;
  double mu = kDefaultAdjustingFactor;
};

struct TrainConfig {
  Method method = Method::fp_better;
  std::size_t epochs = 110;
  std::size_t batch_size = 128;
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lr_decay_factor = 0.1;
  /// Fractions of `epochs` at which the learning rate decays.
  std::vector<double> lr_decay_points = {100.0 / 110.0, 105.0 / 110.0};
  /// Training-time attack; `steps` is used by PGD-AT only.
  AttackConfig attack = {8.0 / 255.0, 10.0 / 255.0, 2, AttackInit::uniform, false, 0.0, 1.0};
  SamplerConfig sampler;
  UpdateTarget update_target = UpdateTarget::subnetwork;
  std::uint64_t seed = 0;
  bool eval_every_epoch = true;
  /// Attack used to pick the best checkpoint (PGD-10 by default).
  AttackConfig eval_attack = {8.0 / 255.0, 2.0 / 255.0, 10, AttackInit::zero, false, 0.0, 1.0};
  /// Size of the fixed training subset watched for catastrophic overfitting.
  std::size_t monitor_examples = 1000;
  double collapse_peak = 0.20;
  double collapse_floor = 0.05;
  BranchScaling eval_scaling = BranchScaling::none;
  bool augment = false;

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double p_min = 1.0;
  double expected_blocks = 0.0;
  /// Mean and ordered sum of the per-iteration adversarial training losses.
  double train_adv_loss = 0.0;
  double cumulative_adv_loss = 0.0;
  std::size_t iterations = 0;
  double clean_accuracy = 0.0;
  double robust_accuracy = 0.0;
  double train_robust_accuracy = 0.0;
  /// Executed residual branches / (iterations * L).
  double executed_branch_fraction = 0.0;
  double wall_time_s = 0.0;
};

struct StepResult {
  double loss = 0.0;
  BlockMask mask;
  std::size_t executed_branches = 0;
};

struct TrainResult {
  Checkpoint best;
  Checkpoint last;
  std::vector<EpochMetrics> history;
  /// Epoch flagged by the catastrophic-overfitting monitor, if any.
  std::optional<std::size_t> collapse_epoch;
};

struct TrainHooks {
  std::function<void(std::size_t epoch, std::size_t iteration, const StepResult&)> on_step;
  std::function<void(const EpochMetrics&)> on_epoch;
};

/// Reshapes examples to the network's per-example input shape (flattening
/// images for affine networks).
Dataset match_input_shape(const Dataset& data, const NetworkSpec& spec);

/// Owns the training state: parameters, momentum buffers, sampler and epoch
/// counter. Random streams are keyed by (seed, epoch), so a restored trainer
/// continues exactly like an uninterrupted one.
class Trainer {
 public:
  Trainer(NetworkSpec spec, TrainConfig config, const Dataset& train, const Dataset& eval);

  /// One iteration on `batch`: sample a mask, craft the perturbation, update
  /// the parameters and accumulate the loss into the temporal controller.
  StepResult step(const Batch& batch);

  /// Runs one epoch including end-of-epoch evaluation and the temporal update.
  EpochMetrics run_epoch(const TrainHooks& hooks = {});

  /// Runs the remaining epochs and returns best/last checkpoints.
  TrainResult run(const TrainHooks& hooks = {});

  const NetworkSpec& spec() const noexcept { return spec_; }
  const TrainConfig& config() const noexcept { return config_; }
  const ParameterSet& params() const noexcept { return params_; }
  ParameterSet& params() noexcept { return params_; }
  const std::vector<Tensor>& momentum() const noexcept { return velocity_; }
  const SubnetworkSampler& sampler() const noexcept { return sampler_; }
  std::size_t epoch() const noexcept { return epoch_; }
  const std::vector<EpochMetrics>& history() const noexcept { return history_; }

  Checkpoint snapshot(double robust_accuracy) const;
  void restore(const Checkpoint& checkpoint);

 private:
  Tensor perturbation(const Batch& batch, const BlockMask& mask);

  NetworkSpec spec_;
  TrainConfig config_;
  Dataset train_;
  Dataset eval_;
  Dataset monitor_;
  ParameterSet params_;
  std::vector<Tensor> velocity_;
  SubnetworkSampler sampler_;
  std::size_t epoch_ = 0;
  std::size_t iteration_ = 0;
  Rng mask_rng_;
  Rng attack_rng_;
  std::vector<EpochMetrics> history_;
};

TrainResult train(const NetworkSpec& spec, const TrainConfig& config, const Dataset& train,
                  const Dataset& eval, const TrainHooks& hooks = {});
TrainResult train_fp_better(const NetworkSpec& spec, TrainConfig config, const Dataset& train,
                            const Dataset& eval, const TrainHooks& hooks = {});
TrainResult train_fgsm_rs(const NetworkSpec& spec, TrainConfig config, const Dataset& train,
                          const Dataset& eval, const TrainHooks& hooks = {});
TrainResult train_pgd_at(const NetworkSpec& spec, TrainConfig config, const Dataset& train,
                         const Dataset& eval, const TrainHooks& hooks = {});
TrainResult train_standard(const NetworkSpec& spec, TrainConfig config, const Dataset& train,
                           const Dataset& eval, const TrainHooks& hooks = {});

/// One JSON object per line; wall time is excluded so that records are
/// reproducible bit for bit.
std::string metrics_record(const EpochMetrics& m);
/// {"epoch":..,"wall_time_s":..}
std::string timing_record(const EpochMetrics& m);
EpochMetrics parse_metrics_record(const std::string& line);

}  // namespace fpb
