#include "fedq/nn/batch.hpp"

#include "fedq/error.hpp"

namespace fedq::nn {

Batch Batch::gather(const std::vector<std::size_t>& order) const {
  Batch out;
  out.rows = order.size();
  for (const auto& [name, field] : sequences) {
    IndexField f;
    f.width = field.width;
    f.indices.reserve(order.size() * field.width);
    f.lengths.reserve(order.size());
    for (std::size_t r : order) {
      auto first = field.indices.begin() + static_cast<std::ptrdiff_t>(r * field.width);
      f.indices.insert(f.indices.end(), first, first + static_cast<std::ptrdiff_t>(field.width));
      f.lengths.push_back(field.lengths[r]);
    }
    out.sequences.emplace(name, std::move(f));
  }
  for (const auto& [name, values] : dense) {
    std::vector<double> v;
    v.reserve(order.size());
    for (std::size_t r : order) v.push_back(values[r]);
    out.dense.emplace(name, std::move(v));
  }
  if (!targets.empty()) {
    out.targets.reserve(order.size());
    for (std::size_t r : order) out.targets.push_back(targets[r]);
  }
  return out;
}

Batch Batch::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > rows) throw ArgumentError("batch slice out of range");
  std::vector<std::size_t> order(end - begin);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = begin + i;
  return gather(order);
}

void Batch::validate() const {
  for (const auto& [name, field] : sequences) {
    if (field.width == 0) throw DataError("sequence field '" + name + "' has zero width");
    if (field.indices.size() != rows * field.width || field.lengths.size() != rows) {
      throw DataError("sequence field '" + name + "' does not match batch row count " +
                      std::to_string(rows));
    }
    for (std::size_t r = 0; r < rows; ++r) {
      if (field.lengths[r] < 1 || field.lengths[r] > field.width) {
        throw DataError("sequence field '" + name + "' row " + std::to_string(r) +
                        " has length " + std::to_string(field.lengths[r]) +
                        " outside 1.." + std::to_string(field.width));
      }
    }
  }
  for (const auto& [name, values] : dense) {
    if (values.size() != rows) {
      throw DataError("dense field '" + name + "' does not match batch row count " +
                      std::to_string(rows));
    }
  }
  if (!targets.empty() && targets.size() != rows) {
    throw DataError("target count " + std::to_string(targets.size()) +
                    " does not match batch row count " + std::to_string(rows));
  }
}

}  // namespace fedq::nn
