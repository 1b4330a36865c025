#include "fpbetter/kernels.hpp"

#include <algorithm>
#include <vector>

namespace fpb::kernels {

void affine_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y,
                    std::size_t batch, std::size_t in, std::size_t out) {
  for (std::size_t b = 0; b < batch; ++b) {
    const double* xr = x.data() + b * in;
    double* yr = y.data() + b * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wr = w.data() + o * in;
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
      yr[o] = acc + bias[o];
    }
  }
}

void affine_backward(std::span<const double> dy, std::span<const double> x,
                     std::span<const double> w, std::span<double> dx, std::span<double> dw,
                     std::span<double> dbias, std::size_t batch, std::size_t in,
                     std::size_t out) {
  if (!dx.empty()) {
    for (std::size_t b = 0; b < batch; ++b) {
      const double* dyr = dy.data() + b * out;
      double* dxr = dx.data() + b * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dyr[o];
        const double* wr = w.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wr[i];
      }
    }
  }
  if (!dw.empty()) {
    for (std::size_t b = 0; b < batch; ++b) {
      const double* dyr = dy.data() + b * out;
      const double* xr = x.data() + b * in;
      for (std::size_t o = 0; o < out; ++o) {
        const double g = dyr[o];
        double* dwr = dw.data() + o * in;
        for (std::size_t i = 0; i < in; ++i) dwr[i] += g * xr[i];
      }
    }
  }
  if (!dbias.empty()) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t o = 0; o < out; ++o) dbias[o] += dy[b * out + o];
    }
  }
}

namespace {

// col has shape [C * k * k, Ho * Wo] for one image.
void im2col(const double* img, double* col, const ConvGeometry& g) {
  const std::size_t ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(g.pad());
  const auto h = static_cast<std::ptrdiff_t>(g.height), w = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    const double* plane = img + c * g.height * g.width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = col + ((c * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            row[oy * wo + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < w) ? plane[iy * w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, double* img, const ConvGeometry& g) {
  const std::size_t ho = g.out_height(), wo = g.out_width(), k = g.kernel;
  const auto pad = static_cast<std::ptrdiff_t>(g.pad());
  const auto h = static_cast<std::ptrdiff_t>(g.height), w = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.in_channels; ++c) {
    double* plane = img + c * g.height * g.width;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* row = col + ((c * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= h) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (ix < 0 || ix >= w) continue;
            plane[iy * w + ix] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

void conv2d_forward(std::span<const double> x, std::span<const double> w,
                    std::span<const double> bias, std::span<double> y, const ConvGeometry& g) {
  const std::size_t rows = g.in_channels * g.kernel * g.kernel;
  const std::size_t pixels = g.out_height() * g.out_width();
  std::vector<double> col(rows * pixels);
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(x.data() + n * g.in_channels * g.height * g.width, col.data(), g);
    double* out = y.data() + n * g.out_channels * pixels;
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      double* orow = out + o * pixels;
      for (std::size_t p = 0; p < pixels; ++p) orow[p] = bias[o];
      const double* wr = w.data() + o * rows;
      for (std::size_t r = 0; r < rows; ++r) {
        const double wv = wr[r];
        const double* crow = col.data() + r * pixels;
        for (std::size_t p = 0; p < pixels; ++p) orow[p] += wv * crow[p];
      }
    }
  }
}

void conv2d_backward(std::span<const double> dy, std::span<const double> x,
                     std::span<const double> w, std::span<double> dx, std::span<double> dw,
                     std::span<double> dbias, const ConvGeometry& g) {
  const std::size_t rows = g.in_channels * g.kernel * g.kernel;
  const std::size_t pixels = g.out_height() * g.out_width();
  std::vector<double> col(rows * pixels);
  std::vector<double> dcol(dx.empty() ? 0 : rows * pixels);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* dout = dy.data() + n * g.out_channels * pixels;
    if (!dbias.empty()) {
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        const double* drow = dout + o * pixels;
        double acc = 0.0;
        for (std::size_t p = 0; p < pixels; ++p) acc += drow[p];
        dbias[o] += acc;
      }
    }
    if (!dw.empty()) {
      im2col(x.data() + n * g.in_channels * g.height * g.width, col.data(), g);
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        const double* drow = dout + o * pixels;
        double* dwr = dw.data() + o * rows;
        for (std::size_t r = 0; r < rows; ++r) {
          const double* crow = col.data() + r * pixels;
          double acc = 0.0;
          for (std::size_t p = 0; p < pixels; ++p) acc += drow[p] * crow[p];
          dwr[r] += acc;
        }
      }
    }
    if (!dx.empty()) {
      std::fill(dcol.begin(), dcol.end(), 0.0);
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        const double* drow = dout + o * pixels;
        const double* wr = w.data() + o * rows;
        for (std::size_t r = 0; r < rows; ++r) {
          const double wv = wr[r];
          double* dcrow = dcol.data() + r * pixels;
          for (std::size_t p = 0; p < pixels; ++p) dcrow[p] += wv * drow[p];
        }
      }
      col2im_add(dcol.data(), dx.data() + n * g.in_channels * g.height * g.width, g);
    }
  }
}

}  // namespace fpb::kernels
