#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fpbetter/attack.hpp"
#include "fpbetter/dataset.hpp"
#include "fpbetter/eval.hpp"
#include "fpbetter/model.hpp"
#include "fpbetter/trainer.hpp"

namespace fpb {

/// Which half of the sampler is switched on. `none` keeps the sampler fields
/// exactly as configured.
enum class Ablation { none, spatial, temporal, both };

std::string_view to_string(Ablation a) noexcept;
Ablation parse_ablation(std::string_view text);

struct DataConfig {
  /// "blobs", "idx" or "cifar".
  std::string source = "blobs";
  std::size_t n_per_class = 500;
  std::size_t eval_n_per_class = 250;
  std::vector<std::vector<double>> centers = {{1.0, 1.0}, {-1.0, -1.0}};
  double sigma = 0.1;
  std::uint64_t seed = 0;
  std::uint64_t eval_seed = 1;
  std::string images;
  std::string labels;
  std::string eval_images;
  std::string eval_labels;
  std::vector<std::string> train_files;
  std::vector<std::string> eval_files;
  /// Keep only the first `limit` examples (0 keeps everything).
  std::size_t limit = 0;
  std::size_t eval_limit = 0;
};

struct ModelConfig {
  std::string preset = "resmlp-4";
  std::size_t width = 64;
};

struct EvalConfig {
  double epsilon = 8.0 / 255.0;
  /// PGD step size; unset means epsilon / 4.
  std::optional<double> pgd_alpha;
  std::vector<std::size_t> pgd_steps = {10};
  bool fgsm = true;
  BranchScaling scaling = BranchScaling::none;
};

struct BoundConfig {
  double delta_prime = 1e-3;
  double gamma = 0.05;
  double c = 1.0;
  double loss_bound = 1.0;
  std::size_t laplace_batches = 20;
  /// "full" or "subnetwork".
  std::string intensity_mode = "full";
  bool exclude_undefined = false;
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  Ablation ablation = Ablation::none;
  /// Training attack step size; unset means 1.25 * epsilon.
  std::optional<double> attack_alpha;
  /// "auto" (on iff the data range is bounded), "on" or "off".
  std::string attack_clip = "auto";
  EvalConfig eval;
  BoundConfig bound;
  std::string output_dir = "runs/default";
};

/// Built-in defaults as a JSON document; every accepted key appears here.
std::string default_config_json();

/// Defaults, then the file (if any), then `key=value` overrides in order.
/// Unknown keys and ill-typed values raise ConfigError.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file,
                          const std::vector<std::string>& overrides = {});
RunConfig parse_run_config(const std::string& json_text,
                           const std::vector<std::string>& overrides = {});

/// Fully resolved configuration, pretty-printed JSON.
std::string resolved_config_json(const RunConfig& config);

struct DataSplits {
  Dataset train;
  Dataset eval;
};

DataSplits load_data(const DataConfig& config);

/// Training configuration after applying the ablation and the attack
/// defaults that depend on the dataset range.
TrainConfig resolve_train_config(const RunConfig& config, const Dataset& train);

NetworkSpec resolve_network(const RunConfig& config, const Dataset& train);

/// Evaluation attacks: "fgsm" (zero init, alpha = epsilon) and "pgd<k>".
std::vector<NamedAttack> evaluation_attacks(const RunConfig& config, const Dataset& data);

}  // namespace fpb
