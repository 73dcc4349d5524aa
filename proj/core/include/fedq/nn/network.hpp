#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fedq/nn/batch.hpp"
#include "fedq/nn/layers.hpp"
#include "fedq/nn/tensor.hpp"
#include "fedq/rng.hpp"

namespace fedq::nn {

enum class Mode { Train, Eval };

// Intermediates recorded by Network::forward for the matching backward.
class ForwardCache {
 public:
  std::size_t rows() const noexcept { return rows_; }

  // Concatenated ReLU activation masks (1 = active) over all ReLU layers.
  // Gradient checks use it to detect finite-difference probes that cross a
  // kink.
  std::vector<std::uint8_t> relu_pattern() const;

 private:
  friend class Network;

  struct Layer {
    Tensor input;
    Tensor normalized;
    std::vector<double> inv_std;
    std::vector<std::uint32_t> lengths;
    std::vector<std::int32_t> indices;
    std::size_t width = 0;
    std::vector<std::size_t> widths;
    std::vector<std::uint8_t> mask;
    std::vector<std::uint8_t> sequence_inputs;
    bool batch_statistics = false;
  };

  std::uint64_t fingerprint_ = 0;
  std::size_t rows_ = 0;
  std::vector<Layer> layers_;
};

struct ForwardResult {
  Tensor logits;  // (rows x output_dim), pre-softmax
  ForwardCache cache;
};

// Executes a ModelSpec. Construction validates the layer sequence; the
// object is immutable afterwards and can be shared across threads.
class Network {
 public:
  // Throws ConfigError naming the offending layer.
  explicit Network(ModelSpec spec);

  const ModelSpec& spec() const noexcept { return spec_; }
  std::size_t output_dim() const noexcept { return output_dim_; }
  std::uint64_t fingerprint() const noexcept { return fingerprint_; }

  // Trainable parameter count derived from the spec alone.
  std::size_t parameter_count() const;

  // FC weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in));
  // embeddings ~ N(0, 1) / sqrt(dim); norm gamma = 1, beta = 0.
  ParameterSet init_parameters(Rng& rng) const;

  // BatchNorm running statistics (mean 0, variance 1). Empty without BN.
  ParameterSet init_buffers() const;

  // In Train mode BatchNorm uses batch statistics and, when `buffers` is
  // given, updates the running statistics in place. Eval mode requires
  // buffers whenever the spec contains BatchNorm.
  ForwardResult forward(const ParameterSet& params, const Batch& batch, Mode mode = Mode::Eval,
                        ParameterSet* buffers = nullptr) const;

  GradientSet backward(const ParameterSet& params, const ForwardCache& cache,
                       const Tensor& dlogits) const;

 private:
  ModelSpec spec_;
  std::size_t output_dim_ = 0;
  std::uint64_t fingerprint_ = 0;
  std::vector<std::string> prefixes_;
};

}  // namespace fedq::nn
