#include "fpbetter/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "fpbetter/error.hpp"
#include "fpbetter/eval.hpp"

namespace fpb {

std::string_view to_string(Method method) noexcept {
  switch (method) {
    case Method::fp_better: return "fp-better";
    case Method::fgsm_rs: return "fgsm-rs";
    case Method::pgd_at: return "pgd-at";
    case Method::standard: return "standard";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  if (text == "fp-better") return Method::fp_better;
  if (text == "fgsm-rs") return Method::fgsm_rs;
  if (text == "pgd-at") return Method::pgd_at;
  if (text == "standard") return Method::standard;
  throw ConfigError("unknown training method '" + std::string(text) + "'");
}

std::string_view to_string(UpdateTarget target) noexcept {
  return target == UpdateTarget::subnetwork ? "subnetwork" : "full";
}

UpdateTarget parse_update_target(std::string_view text) {
  if (text == "subnetwork") return UpdateTarget::subnetwork;
  if (text == "full") return UpdateTarget::full;
  throw ConfigError("unknown update target '" + std::string(text) + "'");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  auto positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!positive(lr)) throw ConfigError("learning rate must be finite and > 0");
  if (!std::isfinite(momentum) || momentum < 0.0) throw ConfigError("momentum must be >= 0");
  if (!std::isfinite(weight_decay) || weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  if (!positive(lr_decay_factor)) throw ConfigError("lr decay factor must be > 0");
  for (double p : lr_decay_points) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("lr decay points must lie in (0, 1)");
  }
  if (!(sampler.p_min > 0.0 && sampler.p_min <= 1.0)) throw ConfigError("p_min must lie in (0, 1]");
  if (!std::isfinite(sampler.mu) || sampler.mu < 0.0) throw ConfigError("mu must be >= 0");
  try {
    attack.validate();
    eval_attack.validate();
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
}

Dataset match_input_shape(const Dataset& data, const NetworkSpec& spec) {
  if (data.example_shape() == spec.input_shape) return data;
  if (shape_numel(data.example_shape()) != shape_numel(spec.input_shape)) {
    throw ShapeError("dataset examples " + shape_to_string(data.example_shape()) +
                     " do not fit network input " + shape_to_string(spec.input_shape));
  }
  Dataset out = data;
  Shape shape{data.size()};
  shape.insert(shape.end(), spec.input_shape.begin(), spec.input_shape.end());
  out.examples = data.examples.reshaped(shape);
  return out;
}

namespace {

Dataset monitor_subset(const Dataset& train, std::size_t n, std::uint64_t seed) {
  auto order = epoch_permutation(train.size(), seed, std::numeric_limits<std::uint64_t>::max());
  order.resize(std::min(n, order.size()));
  std::sort(order.begin(), order.end());
  return train.subset(order);
}

Scaling eval_scaling(const TrainConfig& config, const SubnetworkSampler& sampler) {
  if (config.eval_scaling == BranchScaling::none) return Scaling::none();
  return {BranchScaling::survival_probability, sampler.probabilities()};
}

}  // namespace

Trainer::Trainer(NetworkSpec spec, TrainConfig config, const Dataset& train, const Dataset& eval)
    : spec_(std::move(spec)),
      config_(std::move(config)),
      train_(match_input_shape(train, spec_)),
      eval_(eval.size() > 0 ? match_input_shape(eval, spec_) : eval),
      sampler_(spec_.block_count(), config_.sampler.mode,
               config_.method == Method::fp_better ? config_.sampler.p_min : 1.0,
               config_.method == Method::fp_better ? config_.sampler.mu : 0.0) {
  spec_.validate();
  config_.validate();
  train_.validate();
  if (train_.classes != spec_.classes) throw ShapeError("dataset class count does not match network");
  if (eval_.size() > 0) eval_.validate();
  monitor_ = monitor_subset(train_, config_.monitor_examples, config_.seed);
  params_ = build_network(spec_, config_.seed);
  velocity_.reserve(params_.size());
  for (const auto& t : params_.tensors()) velocity_.emplace_back(t.shape(), 0.0);
  mask_rng_ = Rng::stream(config_.seed, StreamId::masks, 0);
  attack_rng_ = Rng::stream(config_.seed, StreamId::attacks, 0);
}

Tensor Trainer::perturbation(const Batch& batch, const BlockMask& mask) {
  switch (config_.method) {
    case Method::standard:
      return Tensor(batch.inputs.shape(), 0.0);
    case Method::fgsm_rs:
    case Method::fp_better:
      return fgsm(spec_, params_, mask, batch.inputs, batch.labels, config_.attack, attack_rng_);
    case Method::pgd_at:
      return pgd(spec_, params_, batch.inputs, batch.labels, config_.attack, attack_rng_);
  }
  return Tensor(batch.inputs.shape(), 0.0);
}

StepResult Trainer::step(const Batch& batch) {
  const std::size_t blocks = spec_.block_count();
  StepResult result;
  result.mask = config_.method == Method::fp_better ? sampler_.sample(mask_rng_)
                                                    : BlockMask::all_ones(blocks);

  const Tensor delta = perturbation(batch, result.mask);
  const Tensor adversarial = config_.method == Method::standard ? batch.inputs : batch.inputs + delta;
  const bool train_subnetwork =
      config_.method == Method::fp_better && config_.update_target == UpdateTarget::subnetwork;
  ForwardPass pass = forward(spec_, params_, adversarial,
                             train_subnetwork ? result.mask : BlockMask::all_ones(blocks));
  const NodeId loss = pass.graph.softmax_cross_entropy(pass.logits, batch.labels);
  result.loss = pass.graph.value(loss).item();
  if (!std::isfinite(result.loss)) {
    throw NonFiniteError("non-finite training loss at epoch " + std::to_string(epoch_) +
                             ", iteration " + std::to_string(iteration_),
                         loss);
  }
  const Gradients grads = pass.graph.backward(loss);

  const SgdOptions options{lr_at_epoch(config_.lr, config_.lr_decay_factor, config_.lr_decay_points,
                                       config_.epochs, std::min(epoch_, config_.epochs - 1)),
                           config_.momentum, config_.weight_decay};
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!pass.param_active[i]) continue;
    sgd_momentum_step(params_[i], grads.at(pass.params[i]), velocity_[i], options);
  }
  sampler_.record_loss(result.loss);
  result.executed_branches = pass.executed_branches;
  ++iteration_;
  return result;
}

EpochMetrics Trainer::run_epoch(const TrainHooks& hooks) {
  const auto start = std::chrono::steady_clock::now();
  mask_rng_ = Rng::stream(config_.seed, StreamId::masks, epoch_);
  attack_rng_ = Rng::stream(config_.seed, StreamId::attacks, epoch_);

  EpochMetrics m;
  m.epoch = epoch_;
  m.lr = lr_at_epoch(config_.lr, config_.lr_decay_factor, config_.lr_decay_points, config_.epochs,
                     std::min(epoch_, config_.epochs - 1));
  m.p_min = sampler_.p_min();
  m.expected_blocks = sampler_.expected_blocks();

  std::size_t executed = 0;
  const auto batches = minibatches(train_, config_.batch_size, config_.seed, epoch_);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    const StepResult r = [&] {
      if (config_.augment && train_.examples.rank() == 4) {
        Batch augmented = batches[b];
        augmented.inputs = augment_images(batches[b].inputs, config_.seed, epoch_, b);
        return step(augmented);
      }
      return step(batches[b]);
    }();
    executed += r.executed_branches;
    if (hooks.on_step) hooks.on_step(epoch_, b, r);
  }
  m.iterations = batches.size();
  m.cumulative_adv_loss = sampler_.temporal().current_loss;
  m.train_adv_loss = m.cumulative_adv_loss / static_cast<double>(m.iterations);
  m.executed_branch_fraction = static_cast<double>(executed) /
                               static_cast<double>(m.iterations * spec_.block_count());

  const bool last = epoch_ + 1 == config_.epochs;
  if (config_.eval_every_epoch || last) {
    const Scaling scaling = eval_scaling(config_, sampler_);
    const Dataset& held_out = eval_.size() > 0 ? eval_ : train_;
    m.clean_accuracy = accuracy(spec_, params_, held_out, scaling);
    m.robust_accuracy =
        robust_accuracy(spec_, params_, held_out, config_.eval_attack, config_.seed + epoch_, scaling);
    m.train_robust_accuracy =
        robust_accuracy(spec_, params_, monitor_, config_.eval_attack, config_.seed + epoch_, scaling);
  } else {
    m.clean_accuracy = m.robust_accuracy = m.train_robust_accuracy =
        std::numeric_limits<double>::quiet_NaN();
  }

  sampler_.end_period();
  ++epoch_;
  m.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  history_.push_back(m);
  if (hooks.on_epoch) hooks.on_epoch(m);
  return m;
}

Checkpoint Trainer::snapshot(double robust_accuracy) const {
  Checkpoint ck;
  ck.spec = spec_;
  ck.params = params_;
  ck.momentum = velocity_;
  ck.epoch = epoch_;
  ck.method = std::string(to_string(config_.method));
  ck.robust_accuracy = robust_accuracy;
  ck.sampler = {sampler_.mode(), sampler_.p_min(), sampler_.mu(), sampler_.temporal()};
  return ck;
}

void Trainer::restore(const Checkpoint& checkpoint) {
  if (!(checkpoint.spec == spec_)) throw ConfigError("checkpoint network differs from the configured one");
  params_ = checkpoint.params;
  if (checkpoint.momentum.size() == params_.size()) velocity_ = checkpoint.momentum;
  epoch_ = checkpoint.epoch;
  sampler_.restore(checkpoint.sampler.p_min, checkpoint.sampler.temporal);
}

TrainResult Trainer::run(const TrainHooks& hooks) {
  TrainResult result;
  bool have_best = false;
  while (epoch_ < config_.epochs) {
    const EpochMetrics m = run_epoch(hooks);
    if (std::isnan(m.robust_accuracy)) continue;
    if (!have_best || m.robust_accuracy > result.best.robust_accuracy) {
      result.best = snapshot(m.robust_accuracy);
      have_best = true;
    }
  }
  const double last_robust = history_.empty() ? 0.0 : history_.back().robust_accuracy;
  result.last = snapshot(last_robust);
  if (!have_best) result.best = result.last;
  result.history = history_;

  std::vector<double> watched;
  for (const auto& m : history_) {
    if (!std::isnan(m.train_robust_accuracy)) watched.push_back(m.train_robust_accuracy);
  }
  if (!watched.empty()) {
    result.collapse_epoch = overfitting_monitor(watched, config_.collapse_peak, config_.collapse_floor);
  }
  return result;
}

TrainResult train(const NetworkSpec& spec, const TrainConfig& config, const Dataset& train,
                  const Dataset& eval, const TrainHooks& hooks) {
  Trainer trainer(spec, config, train, eval);
  return trainer.run(hooks);
}

TrainResult train_fp_better(const NetworkSpec& spec, TrainConfig config, const Dataset& train,
                            const Dataset& eval, const TrainHooks& hooks) {
  config.method = Method::fp_better;
  return fpb::train(spec, config, train, eval, hooks);
}

TrainResult train_fgsm_rs(const NetworkSpec& spec, TrainConfig config, const Dataset& train,
                          const Dataset& eval, const TrainHooks& hooks) {
  config.method = Method::fgsm_rs;
  return fpb::train(spec, config, train, eval, hooks);
}

TrainResult train_pgd_at(const NetworkSpec& spec, TrainConfig config, const Dataset& train,
                         const Dataset& eval, const TrainHooks& hooks) {
  config.method = Method::pgd_at;
  return fpb::train(spec, config, train, eval, hooks);
}

TrainResult train_standard(const NetworkSpec& spec, TrainConfig config, const Dataset& train,
                           const Dataset& eval, const TrainHooks& hooks) {
  config.method = Method::standard;
  return fpb::train(spec, config, train, eval, hooks);
}

namespace {

nlohmann::json number_or_null(double v) {
  return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v);
}

double number_from(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

std::string metrics_record(const EpochMetrics& m) {
  nlohmann::json j = {{"epoch", m.epoch},
                      {"lr", m.lr},
                      {"p_min", m.p_min},
                      {"expected_blocks", m.expected_blocks},
                      {"train_adv_loss", m.train_adv_loss},
                      {"cumulative_adv_loss", m.cumulative_adv_loss},
                      {"iterations", m.iterations},
                      {"clean_acc", number_or_null(m.clean_accuracy)},
                      {"pgd10_acc", number_or_null(m.robust_accuracy)},
                      {"train_pgd10_acc", number_or_null(m.train_robust_accuracy)},
                      {"executed_branch_fraction", m.executed_branch_fraction}};
  return j.dump();
}

std::string timing_record(const EpochMetrics& m) {
  return nlohmann::json{{"epoch", m.epoch}, {"wall_time_s", m.wall_time_s}}.dump();
}

EpochMetrics parse_metrics_record(const std::string& line) {
  EpochMetrics m;
  try {
    const auto j = nlohmann::json::parse(line);
    m.epoch = j.at("epoch").get<std::size_t>();
    m.lr = j.at("lr").get<double>();
    m.p_min = j.at("p_min").get<double>();
    m.expected_blocks = j.at("expected_blocks").get<double>();
    m.train_adv_loss = j.at("train_adv_loss").get<double>();
    m.cumulative_adv_loss = j.at("cumulative_adv_loss").get<double>();
    m.iterations = j.at("iterations").get<std::size_t>();
    m.clean_accuracy = number_from(j.at("clean_acc"));
    m.robust_accuracy = number_from(j.at("pgd10_acc"));
    m.train_robust_accuracy = number_from(j.at("train_pgd10_acc"));
    m.executed_branch_fraction = j.at("executed_branch_fraction").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError(std::string("malformed metrics record: ") + e.what());
  }
  return m;
}

}  // namespace fpb
