#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "fpbetter/model.hpp"
#include "fpbetter/sampler.hpp"

namespace fpb {

struct SamplerSnapshot {
  ScheduleMode mode = ScheduleMode::linear;
  double p_min = 1.0;
  double mu = 0.0;
  TemporalState temporal;

  friend bool operator==(const SamplerSnapshot&, const SamplerSnapshot&) = default;
};

/// Self-describing training snapshot. On disk:
///
///   offset 0   8 bytes  magic "FPBCKPT\0"
///   offset 8   u32 LE   format version (1)
///   offset 12  u32 LE   reserved, 0
///   offset 16  u64 LE   header length H
///   offset 24  H bytes  UTF-8 JSON header (spec, seed, epoch, sampler state,
///                       tensor directory with name/shape/offset/count)
///   24 + H     payload  tensors as little-endian IEEE-754 doubles, in
///                       directory order; offsets are relative to the payload
struct Checkpoint {
  NetworkSpec spec;
  ParameterSet params;
  /// Momentum buffers aligned with `params`, or empty.
  std::vector<Tensor> momentum;
  std::size_t epoch = 0;
  std::string method;
  double robust_accuracy = 0.0;
  SamplerSnapshot sampler;
  /// Resolved run configuration as JSON text; may be empty.
  std::string config_json;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
/// Throws BadMagicError, TruncatedFileError or DataFormatError on malformed input.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fpb
