#include "fpbetter/tensor.hpp"

#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "fpbetter/error.hpp"

namespace fpb {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {
  for (auto extent : shape_) {
    if (extent == 0) throw ShapeError("tensor extents must be positive: " + shape_to_string(shape_));
  }
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (auto extent : shape_) {
    if (extent == 0) throw ShapeError("tensor extents must be positive: " + shape_to_string(shape_));
  }
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_to_string(shape_) + " does not match " +
                     std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor(Shape{values.size()}, std::vector<double>(values));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double Tensor::max_abs() const noexcept {
  double m = 0.0;
  for (double v : data_) m = std::max(m, std::abs(v));
  return m;
}

double Tensor::l2_norm() const noexcept {
  double s = 0.0;
  for (double v : data_) s += v * v;
  return std::sqrt(s);
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  if (shape_.empty() || begin >= end || end > shape_[0]) {
    throw ShapeError("slice_rows out of range for " + shape_to_string(shape_));
  }
  const std::size_t row = data_.size() / shape_[0];
  Shape shape = shape_;
  shape[0] = end - begin;
  return Tensor(std::move(shape),
                std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * row),
                                    data_.begin() + static_cast<std::ptrdiff_t>(end * row)));
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (shape_ != other.shape_) throw ShapeError("shape mismatch in +=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  if (shape_ != other.shape_) throw ShapeError("shape mismatch in -=");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double factor) noexcept {
  for (double& v : data_) v *= factor;
  return *this;
}

bool Tensor::bitwise_equal(const Tensor& other) const noexcept {
  return shape_ == other.shape_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
Tensor operator*(Tensor a, double factor) { return a *= factor; }

Tensor gather_rows(const Tensor& source, std::span<const std::size_t> rows) {
  if (source.rank() == 0 || rows.empty()) throw ShapeError("gather_rows needs rows");
  const std::size_t n = source.dim(0);
  const std::size_t row = source.size() / n;
  Shape shape = source.shape();
  shape[0] = rows.size();
  std::vector<double> out(rows.size() * row);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw ShapeError("gather_rows index out of range");
    std::memcpy(out.data() + r * row, source.data().data() + rows[r] * row, row * sizeof(double));
  }
  return Tensor(std::move(shape), std::move(out));
}

}  // namespace fpb
