#include "fedq/compression/quantize.hpp"

#include <cmath>
#include <limits>
#include <unordered_map>

#include "fedq/error.hpp"

namespace fedq::compression {

StepRule parse_step_rule(const std::string& name) {
  if (name == "masked_and") return StepRule::MaskedAnd;
  if (name == "literal") return StepRule::Literal;
  throw ConfigError("unknown step rule '" + name + "' (expected masked_and or literal)");
}

std::string to_string(StepRule rule) { return rule == StepRule::MaskedAnd ? "masked_and" : "literal"; }

double step_size(int qp, int f_qp, StepRule rule) {
  if (f_qp < 0 || f_qp > 24) throw ConfigError("compression.f_qp must lie in 0..24");
  const std::int64_t one = std::int64_t{1} << f_qp;
  const std::int64_t q = qp;
  const std::int64_t m = rule == StepRule::MaskedAnd ? one + (q & (one - 1)) : one + (q + (one - 1));
  const std::int64_t s = q >> f_qp;  // arithmetic shift: floor division for negatives
  return std::ldexp(static_cast<double>(m), static_cast<int>(s - f_qp));
}

int QuantConfig::qp_for(const std::string& tensor) const {
  auto it = per_tensor_qp_offset.find(tensor);
  return qp + (it == per_tensor_qp_offset.end() ? 0 : it->second);
}

void QuantConfig::validate(std::span<const std::string> tensor_names) const {
  auto check = [&](int q, const std::string& where) {
    const double d = step_size(q, f_qp, rule);
    if (!(d > 0.0) || !std::isfinite(d)) {
      throw ConfigError("compression.qp " + std::to_string(q) + where + " gives step size " + std::to_string(d) +
                        " under the " + to_string(rule) + " rule; the step must be positive");
    }
  };
  check(qp, "");
  for (const auto& [name, offset] : per_tensor_qp_offset) check(qp + offset, " (tensor " + name + ")");
  for (const auto& name : tensor_names) check(qp_for(name), " (tensor " + name + ")");
}

std::vector<std::int32_t> quantize_values(std::span<const double> values, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) {
    throw EncodingError("quantization step must be positive and finite, got " + std::to_string(step));
  }
  constexpr double kMax = std::numeric_limits<std::int32_t>::max();
  const double half = step / 2.0;
  std::vector<std::int32_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = values[i];
    if (!std::isfinite(x)) throw EncodingError("cannot quantize non-finite value at index " + std::to_string(i));
    double k = std::round(x / step);
    const double r = x - k * step;
    if (r > half) k += 1;
    if (r < -half) k -= 1;
    if (std::abs(k) > kMax) {
      throw EncodingError("quantization index overflows int32 at element " + std::to_string(i) + " (value " +
                          std::to_string(x) + ", step " + std::to_string(step) + ")");
    }
    out[i] = static_cast<std::int32_t>(k);
  }
  return out;
}

QuantizedTensor quantize(const nn::Tensor& tensor, double step) {
  QuantizedTensor q;
  q.shape = tensor.shape();
  q.step = step;
  q.indices = quantize_values(tensor.values(), step);
  return q;
}

nn::Tensor dequantize(const QuantizedTensor& q) {
  std::vector<double> v(q.indices.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<double>(q.indices[i]) * q.step;
  return nn::Tensor(q.shape, std::move(v));
}

std::vector<QuantizedTensor> quantize_model(const nn::ParameterSet& params, const QuantConfig& config) {
  std::vector<QuantizedTensor> out;
  out.reserve(params.size());
  for (const auto& e : params) {
    const int qp = config.qp_for(e.name);
    QuantizedTensor q = quantize(e.tensor, step_size(qp, config.f_qp, config.rule));
    q.name = e.name;
    q.qp = qp;
    out.push_back(std::move(q));
  }
  return out;
}

nn::ParameterSet dequantize_model(const std::vector<QuantizedTensor>& model) {
  nn::ParameterSet p;
  for (const auto& q : model) p.add(q.name, dequantize(q));
  return p;
}

namespace {

double entropy_of(const std::unordered_map<std::int32_t, std::uint64_t>& counts, std::uint64_t total) {
  double h = 0.0;
  for (const auto& [value, n] : counts) {
    const double p = static_cast<double>(n) / static_cast<double>(total);
    h -= p * std::log2(p);
  }
  return h;
}

}  // namespace

double weight_entropy(std::span<const std::int32_t> indices) {
  if (indices.empty()) throw ArgumentError("weight_entropy: no indices");
  std::unordered_map<std::int32_t, std::uint64_t> counts;
  for (auto i : indices) ++counts[i];
  return entropy_of(counts, indices.size());
}

double weight_entropy(const std::vector<QuantizedTensor>& model) {
  std::unordered_map<std::int32_t, std::uint64_t> counts;
  std::uint64_t total = 0;
  for (const auto& q : model) {
    for (auto i : q.indices) ++counts[i];
    total += q.indices.size();
  }
  if (total == 0) throw ArgumentError("weight_entropy: no indices");
  return entropy_of(counts, total);
}

double space_saving(std::uint64_t uncompressed, std::uint64_t compressed) {
  if (uncompressed == 0) throw ArgumentError("space_saving: uncompressed size must be > 0");
  return 1.0 - static_cast<double>(compressed) / static_cast<double>(uncompressed);
}

std::uint64_t uncompressed_bytes(const nn::ParameterSet& params) {
  return 4 * static_cast<std::uint64_t>(params.parameter_count());
}

}  // namespace fedq::compression
