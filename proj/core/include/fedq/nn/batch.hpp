#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace fedq::nn {

// Padded index sequences, one row per sample. Cells at positions >= the row
// length are padding and never read.
struct IndexField {
  std::size_t width = 0;
  std::vector<std::int32_t> indices;  // rows * width
  std::vector<std::uint32_t> lengths;  // one per row, 1..width

  std::int32_t at(std::size_t row, std::size_t pos) const { return indices[row * width + pos]; }
};

// Model input batch: named index sequences, named per-row scalar features,
// and integer class targets.
struct Batch {
  std::size_t rows = 0;
  std::map<std::string, IndexField> sequences;
  std::map<std::string, std::vector<double>> dense;
  std::vector<std::int32_t> targets;

  // Copy of rows [begin, end). Sequence widths are preserved.
  Batch slice(std::size_t begin, std::size_t end) const;

  // Rows gathered in the given order.
  Batch gather(const std::vector<std::size_t>& rows) const;

  // Throws DataError on inconsistent field sizes or lengths.
  void validate() const;
};

}  // namespace fedq::nn
