#include "fpbetter/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "fpbetter/error.hpp"
#include "fpbetter/rng.hpp"

namespace fpb {

Shape Dataset::example_shape() const {
  if (examples.rank() < 2) return {};
  return Shape(examples.shape().begin() + 1, examples.shape().end());
}

void Dataset::validate() const {
  if (labels.empty()) throw DataFormatError("dataset is empty");
  if (examples.rank() < 2 || examples.dim(0) != labels.size()) {
    throw DataFormatError("dataset has " + std::to_string(labels.size()) + " labels but examples " +
                          shape_to_string(examples.shape()));
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DataFormatError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
  }
  if (!examples.all_finite()) throw DataFormatError("dataset contains non-finite values");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.examples = gather_rows(examples, indices);
  out.labels.reserve(indices.size());
  for (auto i : indices) out.labels.push_back(labels.at(i));
  out.classes = classes;
  out.range = range;
  out.normalization = normalization;
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  std::vector<std::size_t> idx(std::min(n, size()));
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return subset(idx);
}

Dataset make_blobs(std::size_t n_per_class, std::size_t dims,
                   const std::vector<std::vector<double>>& centers, double sigma,
                   std::uint64_t seed) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw DomainError("make_blobs: sigma must be > 0");
  if (n_per_class == 0 || dims == 0) throw DomainError("make_blobs: empty request");
  if (centers.size() < 2) throw DomainError("make_blobs: need at least two centers");
  for (std::size_t c = 0; c < centers.size(); ++c) {
    if (centers[c].size() != dims) throw DomainError("make_blobs: center dimension mismatch");
    for (std::size_t d = 0; d < c; ++d) {
      if (centers[c] == centers[d]) throw DomainError("make_blobs: duplicate centers");
    }
  }
  Rng rng = Rng::stream(seed, StreamId::data);
  const std::size_t n = n_per_class * centers.size();
  Dataset out;
  out.examples = Tensor(Shape{n, dims});
  out.labels.resize(n);
  out.classes = centers.size();
  std::size_t row = 0;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      for (std::size_t d = 0; d < dims; ++d) {
        out.examples[row * dims + d] = centers[c][d] + sigma * rng.normal();
      }
      out.labels[row] = static_cast<int>(c);
    }
  }
  return out;
}

namespace {

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError("cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset,
                        const std::filesystem::path& path) {
  if (bytes.size() < offset + 4) throw TruncatedFileError(path.string() + ": truncated IDX header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr std::size_t kCifarPixels = 3 * 32 * 32;
constexpr std::size_t kCifarRecord = 1 + kCifarPixels;

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_bytes(images);
  const auto lab = read_bytes(labels);

  if (read_be32(img, 0, images) != kIdxImageMagic) {
    throw BadMagicError(images.string() + ": not an IDX image file (bad magic)");
  }
  const std::size_t count = read_be32(img, 4, images);
  const std::size_t rows = read_be32(img, 8, images);
  const std::size_t cols = read_be32(img, 12, images);
  if (count == 0 || rows == 0 || cols == 0) throw DataFormatError(images.string() + ": zero dimension");
  if (img.size() < 16 + count * rows * cols) {
    throw TruncatedFileError(images.string() + ": expected " + std::to_string(count * rows * cols) +
                             " pixel bytes, file has " + std::to_string(img.size() - 16));
  }

  if (read_be32(lab, 0, labels) != kIdxLabelMagic) {
    throw BadMagicError(labels.string() + ": not an IDX label file (bad magic)");
  }
  const std::size_t label_count = read_be32(lab, 4, labels);
  if (label_count != count) {
    throw CountMismatchError("IDX images hold " + std::to_string(count) + " items but labels hold " +
                             std::to_string(label_count));
  }
  if (lab.size() < 8 + count) throw TruncatedFileError(labels.string() + ": truncated label data");

  Dataset out;
  out.examples = Tensor(Shape{count, 1, rows, cols});
  for (std::size_t i = 0; i < count * rows * cols; ++i) out.examples[i] = img[16 + i] / 255.0;
  out.labels.resize(count);
  int max_label = 1;
  for (std::size_t i = 0; i < count; ++i) {
    out.labels[i] = lab[8 + i];
    max_label = std::max(max_label, out.labels[i]);
  }
  out.classes = static_cast<std::size_t>(max_label) + 1;
  out.range = {true, 0.0, 1.0};
  return out;
}

Dataset load_cifar_binary(const std::vector<std::filesystem::path>& files,
                          std::optional<std::size_t> expected_count) {
  if (files.empty()) throw DataFormatError("no CIFAR files given");
  std::vector<double> pixels;
  std::vector<int> labels;
  for (const auto& path : files) {
    const auto bytes = read_bytes(path);
    if (bytes.empty() || bytes.size() % kCifarRecord != 0) {
      throw TruncatedFileError(path.string() + ": size " + std::to_string(bytes.size()) +
                               " is not a positive multiple of " + std::to_string(kCifarRecord));
    }
    for (std::size_t off = 0; off < bytes.size(); off += kCifarRecord) {
      if (bytes[off] > 9) {
        throw DataFormatError(path.string() + ": label byte " + std::to_string(bytes[off]) +
                              " out of range");
      }
      labels.push_back(bytes[off]);
      for (std::size_t p = 0; p < kCifarPixels; ++p) pixels.push_back(bytes[off + 1 + p] / 255.0);
    }
  }
  if (expected_count && labels.size() != *expected_count) {
    throw CountMismatchError("CIFAR files hold " + std::to_string(labels.size()) +
                             " records, expected " + std::to_string(*expected_count));
  }
  Dataset out;
  out.examples = Tensor(Shape{labels.size(), 3, 32, 32}, std::move(pixels));
  out.labels = std::move(labels);
  out.classes = 10;
  out.range = {true, 0.0, 1.0};
  return out;
}

void write_idx(const Dataset& data, const std::filesystem::path& images,
               const std::filesystem::path& labels) {
  const Shape shape = data.example_shape();
  if (!(shape.size() == 3 && shape[0] == 1) && shape.size() != 2) {
    throw ShapeError("write_idx needs single-channel images");
  }
  const std::size_t rows = shape[shape.size() - 2], cols = shape.back();
  std::ofstream img(images, std::ios::binary);
  put_be32(img, kIdxImageMagic);
  put_be32(img, static_cast<std::uint32_t>(data.size()));
  put_be32(img, static_cast<std::uint32_t>(rows));
  put_be32(img, static_cast<std::uint32_t>(cols));
  for (double v : data.examples.data()) img.put(static_cast<char>(to_byte(v)));
  std::ofstream lab(labels, std::ios::binary);
  put_be32(lab, kIdxLabelMagic);
  put_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int y : data.labels) lab.put(static_cast<char>(y));
  if (!img || !lab) throw Error("failed to write IDX files");
}

void write_cifar_binary(const Dataset& data, const std::filesystem::path& file) {
  if (data.example_shape() != Shape{3, 32, 32}) throw ShapeError("write_cifar_binary needs [N, 3, 32, 32]");
  std::ofstream out(file, std::ios::binary);
  for (std::size_t i = 0; i < data.size(); ++i) {
    out.put(static_cast<char>(data.labels[i]));
    for (std::size_t p = 0; p < kCifarPixels; ++p) {
      out.put(static_cast<char>(to_byte(data.examples[i * kCifarPixels + p])));
    }
  }
  if (!out) throw Error("failed to write " + file.string());
}

std::vector<std::size_t> epoch_permutation(std::size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::stream(seed, StreamId::shuffle, epoch);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i));
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

namespace {

std::vector<Batch> batches_in_order(const Dataset& data, std::size_t batch_size,
                                    const std::vector<std::size_t>& order) {
  if (batch_size == 0) throw DomainError("batch size must be >= 1");
  std::vector<Batch> out;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    Batch b;
    b.indices.assign(order.begin() + static_cast<std::ptrdiff_t>(begin),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
    b.inputs = gather_rows(data.examples, b.indices);
    b.labels.reserve(b.indices.size());
    for (auto i : b.indices) b.labels.push_back(data.labels[i]);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace

std::vector<Batch> minibatches(const Dataset& data, std::size_t batch_size, std::uint64_t seed,
                               std::uint64_t epoch) {
  return batches_in_order(data, batch_size, epoch_permutation(data.size(), seed, epoch));
}

std::vector<Batch> ordered_batches(const Dataset& data, std::size_t batch_size) {
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  return batches_in_order(data, batch_size, order);
}

Tensor augment_images(const Tensor& images, std::uint64_t seed, std::uint64_t epoch,
                      std::uint64_t batch_index) {
  if (images.rank() != 4) throw ShapeError("augment_images expects [B, C, H, W]");
  constexpr std::ptrdiff_t kPad = 4;
  const std::size_t batch = images.dim(0), channels = images.dim(1);
  const auto h = static_cast<std::ptrdiff_t>(images.dim(2));
  const auto w = static_cast<std::ptrdiff_t>(images.dim(3));
  Rng rng = Rng::stream(seed ^ (epoch * 0x9E3779B97F4A7C15ULL), StreamId::augment, batch_index);
  Tensor out(images.shape(), 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto dy = static_cast<std::ptrdiff_t>(rng.below(2 * kPad + 1)) - kPad;
    const auto dx = static_cast<std::ptrdiff_t>(rng.below(2 * kPad + 1)) - kPad;
    const bool flip = rng.bernoulli(0.5);
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t plane = (b * channels + c) * static_cast<std::size_t>(h * w);
      for (std::ptrdiff_t y = 0; y < h; ++y) {
        for (std::ptrdiff_t x = 0; x < w; ++x) {
          const std::ptrdiff_t sy = y + dy;
          std::ptrdiff_t sx = x + dx;
          if (flip) sx = w - 1 - sx;
          if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
          out[plane + static_cast<std::size_t>(y * w + x)] =
              images[plane + static_cast<std::size_t>(sy * w + sx)];
        }
      }
    }
  }
  return out;
}

}  // namespace fpb
