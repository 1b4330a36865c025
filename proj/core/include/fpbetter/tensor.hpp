#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace fpb {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Value of a single-element tensor.
  double item() const;

  bool all_finite() const noexcept;
  double max_abs() const noexcept;
  double l2_norm() const noexcept;

  /// Same data viewed with a new shape of equal element count.
  Tensor reshaped(Shape shape) const;

  /// Rows [begin, end) along the leading axis.
  Tensor slice_rows(std::size_t begin, std::size_t end) const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double factor) noexcept;

  /// Bitwise comparison of shape and every element.
  bool bitwise_equal(const Tensor& other) const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(Tensor a, double factor);

/// Gathers rows of `source` (leading axis) in the order given.
Tensor gather_rows(const Tensor& source, std::span<const std::size_t> rows);

}  // namespace fpb
