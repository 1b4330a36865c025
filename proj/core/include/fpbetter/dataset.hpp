#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "fpbetter/tensor.hpp"

namespace fpb {

/// Declared value range of the examples; bounded ranges enable attack
/// clipping by default.
struct ValueRange {
  bool bounded = false;
  double lo = 0.0;
  double hi = 1.0;
};

/// Per-channel normalization metadata; empty when the data is unnormalized.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> stddev;

  bool enabled() const noexcept { return !mean.empty(); }
};

struct Dataset {
  Tensor examples;  // [N, example shape...]
  std::vector<int> labels;
  std::size_t classes = 0;
  ValueRange range;
  Normalization normalization;

  std::size_t size() const noexcept { return labels.size(); }
  Shape example_shape() const;
  /// Throws DataFormatError when counts, labels or values are inconsistent.
  void validate() const;
  Dataset subset(std::span<const std::size_t> indices) const;
  /// First min(n, size()) examples.
  Dataset head(std::size_t n) const;
};

struct Batch {
  Tensor inputs;
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

/// Gaussian clusters, n_per_class points around each center (label = center
/// index), ordered by class. The range is declared unbounded.
Dataset make_blobs(std::size_t n_per_class, std::size_t dims,
                   const std::vector<std::vector<double>>& centers, double sigma,
                   std::uint64_t seed);

/// IDX image file (magic 0x00000803) plus IDX label file (magic 0x00000801).
/// Pixels are scaled to [0, 1]; examples have shape [N, 1, rows, cols].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// CIFAR-10 binary batches: records of one label byte followed by 3072 pixel
/// bytes (R, G, B planes of 32x32). Examples have shape [N, 3, 32, 32].
Dataset load_cifar_binary(const std::vector<std::filesystem::path>& files,
                          std::optional<std::size_t> expected_count = std::nullopt);

/// Writers for the same formats; pixels are rounded back to bytes.
void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels);
void write_cifar_binary(const Dataset& data, const std::filesystem::path& file);

/// Shuffle order for one epoch, a pure function of (seed, epoch).
std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch);

/// Consecutive batches over the epoch permutation; the final short batch is
/// kept.
std::vector<Batch> minibatches(const Dataset& data, std::size_t batch_size, std::uint64_t seed,
                               std::uint64_t epoch);

/// Batches in dataset order, no shuffling.
std::vector<Batch> ordered_batches(const Dataset& data, std::size_t batch_size);

/// Random 4-pixel padded crop and horizontal flip of an image batch
/// [B, C, H, W]; deterministic in (seed, epoch, batch index).
Tensor augment_images(const Tensor& images, std::uint64_t seed, std::uint64_t epoch,
                      std::uint64_t batch_index);

}  // namespace fpb
