#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace fedq::nn {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major float64 tensor.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape()); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // 2-D accessors; caller guarantees rank 2.
  double& at(std::size_t row, std::size_t col) noexcept {
    return data_[row * shape_[1] + col];
  }
  double at(std::size_t row, std::size_t col) const noexcept {
    return data_[row * shape_[1] + col];
  }

  std::span<double> row(std::size_t r) {
    std::size_t width = size() / shape_[0];
    return std::span<double>(data_).subspan(r * width, width);
  }
  std::span<const double> row(std::size_t r) const {
    std::size_t width = size() / shape_[0];
    return std::span<const double>(data_).subspan(r * width, width);
  }

  void fill(double value);
  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Ordered, uniquely named tensors. Holds model parametrizations as well as
// gradients (GradientSet) and non-trainable buffers.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    friend bool operator==(const Entry&, const Entry&) = default;
  };

  // Throws ConfigError on a duplicate name.
  Tensor& add(std::string name, Tensor tensor);

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  const Entry& entry(std::size_t i) const { return entries_.at(i); }
  Entry& entry(std::size_t i) { return entries_.at(i); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  bool contains(const std::string& name) const;
  // Throws ConfigError when absent.
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  // Total scalar count over all tensors.
  std::size_t parameter_count() const;

  // Same names and shapes in the same order.
  bool congruent_with(const ParameterSet& other) const;

  // Zero tensors with this set's names and shapes.
  ParameterSet zeros_like() const;

  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }

  friend bool operator==(const ParameterSet&, const ParameterSet&) = default;

 private:
  std::vector<Entry> entries_;
};

using GradientSet = ParameterSet;

// Throws ConfigError naming the first mismatch unless a and b are congruent.
void require_congruent(const ParameterSet& a, const ParameterSet& b,
                       const char* context);

}  // namespace fedq::nn
