#pragma once

#include <cstddef>
#include <span>

// Raw numeric kernels behind the autodiff primitives. All reductions run in a
// fixed serial order so results are bitwise reproducible.

namespace fpb::kernels {

struct ConvGeometry {
  std::size_t batch, in_channels, height, width;
  std::size_t out_channels, kernel, stride;

  std::size_t pad() const noexcept { return kernel / 2; }
  std::size_t out_height() const noexcept { return (height + 2 * pad() - kernel) / stride + 1; }
  std::size_t out_width() const noexcept { return (width + 2 * pad() - kernel) / stride + 1; }
};

/// y[b, o] = sum_i x[b, i] * w[o, i] + bias[o]
void affine_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y,
                    std::size_t batch, std::size_t in, std::size_t out);

/// Accumulates into dx, dw, dbias (any may be empty to skip).
void affine_backward(std::span<const double> dy, std::span<const double> x,
                     std::span<const double> w, std::span<double> dx, std::span<double> dw,
                     std::span<double> dbias, std::size_t batch, std::size_t in,
                     std::size_t out);

/// Zero-padded "same" convolution (pad = kernel / 2), NCHW layout, weights
/// [out, in, k, k].
void conv2d_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y, const ConvGeometry& g);

void conv2d_backward(std::span<const double> dy, std::span<const double> x,
                     std::span<const double> w, std::span<double> dx, std::span<double> dw,
                     std::span<double> dbias, const ConvGeometry& g);

}  // namespace fpb::kernels
