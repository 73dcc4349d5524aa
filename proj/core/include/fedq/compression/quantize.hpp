#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fedq/nn/tensor.hpp"

namespace fedq::compression {

// How the mantissa of the step size takes the low bits of qp.
//   MaskedAnd: m = (1 << f) + (qp & ((1 << f) - 1))   (default)
//   Literal:   m = (1 << f) + (qp + ((1 << f) - 1))   (goes non-positive for
//              qp < -(1 << f); kept to document the alternative reading)
// In both, s = qp >> f with an arithmetic (floor) shift and
// delta = m * 2^(s - f).
enum class StepRule { MaskedAnd, Literal };

StepRule parse_step_rule(const std::string& name);
std::string to_string(StepRule rule);

// Throws ConfigError for f_qp outside 0..24.
double step_size(int qp, int f_qp, StepRule rule = StepRule::MaskedAnd);

struct QuantConfig {
  int qp = -30;
  int f_qp = 2;
  std::map<std::string, int> per_tensor_qp_offset;
  StepRule rule = StepRule::MaskedAnd;

  int qp_for(const std::string& tensor) const;
  // Throws ConfigError unless every step size in use is positive.
  void validate(std::span<const std::string> tensor_names = {}) const;
};

struct QuantizedTensor {
  std::string name;
  nn::Shape shape;
  int qp = 0;
  double step = 1.0;
  std::vector<std::int32_t> indices;

  friend bool operator==(const QuantizedTensor&, const QuantizedTensor&) = default;
};

// index = round(x / step), ties away from zero, corrected so that
// |index * step - x| <= step / 2 holds in floating point. Throws
// EncodingError on a non-positive step, a non-finite value, or an index
// outside the int32 range.
std::vector<std::int32_t> quantize_values(std::span<const double> values, double step);
QuantizedTensor quantize(const nn::Tensor& tensor, double step);

nn::Tensor dequantize(const QuantizedTensor& q);

std::vector<QuantizedTensor> quantize_model(const nn::ParameterSet& params, const QuantConfig& config);
nn::ParameterSet dequantize_model(const std::vector<QuantizedTensor>& model);

// Empirical Shannon entropy of the index histogram, bits per index. Throws
// ArgumentError on empty input.
double weight_entropy(std::span<const std::int32_t> indices);
double weight_entropy(const std::vector<QuantizedTensor>& model);

// 1 - compressed / uncompressed. Throws ArgumentError if uncompressed is 0.
double space_saving(std::uint64_t uncompressed_bytes, std::uint64_t compressed_bytes);

// Float32 wire size of a parameter set: 4 bytes per parameter.
std::uint64_t uncompressed_bytes(const nn::ParameterSet& params);

}  // namespace fedq::compression
