#include "fedq/nn/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "fedq/error.hpp"

namespace fedq::nn {

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ConfigError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
  data_.assign(element_count(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ConfigError("tensor dimensions must be positive, got " + shape_string(shape_));
  }
  if (data_.size() != element_count(shape_)) {
    throw ConfigError("tensor data length " + std::to_string(data_.size()) +
                      " does not match shape " + shape_string(shape_));
  }
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& ParameterSet::add(std::string name, Tensor tensor) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  entries_.push_back(Entry{std::move(name), std::move(tensor)});
  return entries_.back().tensor;
}

bool ParameterSet::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const Entry& e) { return e.name == name; });
}

const Tensor& ParameterSet::at(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.tensor;
  }
  throw ConfigError("no parameter named '" + name + "'");
}

Tensor& ParameterSet::at(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

bool ParameterSet::congruent_with(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (entries_[i].tensor.shape() != other.entries_[i].tensor.shape()) return false;
  }
  return true;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  out.entries_.reserve(entries_.size());
  for (const auto& e : entries_) out.entries_.push_back(Entry{e.name, Tensor::zeros_like(e.tensor)});
  return out;
}

void require_congruent(const ParameterSet& a, const ParameterSet& b, const char* context) {
  if (a.size() != b.size()) {
    throw ConfigError(std::string(context) + ": tensor count mismatch (" +
                      std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto& ea = a.entry(i);
    const auto& eb = b.entry(i);
    if (ea.name != eb.name || ea.tensor.shape() != eb.tensor.shape()) {
      throw ConfigError(std::string(context) + ": entry " + std::to_string(i) + " '" + ea.name +
                        "' " + shape_string(ea.tensor.shape()) + " vs '" + eb.name + "' " +
                        shape_string(eb.tensor.shape()));
    }
  }
}

}  // namespace fedq::nn
