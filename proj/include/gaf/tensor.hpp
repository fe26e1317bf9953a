#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaf/errors.hpp"

namespace gaf {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Dense row-major array of doubles with an optional gradient slot.
///
/// A rank-0 tensor (empty shape) holds a single scalar. Every extent must be
/// positive. The gradient, once enabled, always has the same length as the
/// data.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double value);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 1 : shape_[0]; }
  // Extent of everything after the leading axis.
  std::size_t row_width() const { return shape_.empty() ? 1 : size() / shape_[0]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * row_width() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * row_width() + c]; }
  double item() const;

  std::span<const double> row(std::size_t r) const;
  Tensor rows_slice(std::size_t begin, std::size_t end) const;
  Tensor reshaped(Shape shape) const;
  Tensor transposed() const;

  bool has_grad() const { return grad_.has_value(); }
  // Allocates a zero gradient if none exists yet.
  void enable_grad();
  void drop_grad() { grad_.reset(); }
  void zero_grad();
  std::span<double> grad();
  std::span<const double> grad() const;

  bool all_finite() const;

  nlohmann::json to_json() const;
  static Tensor from_json(const nlohmann::json& j);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  std::optional<std::vector<double>> grad_;
};

}  // namespace gaf
