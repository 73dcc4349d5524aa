#pragma once

#include "fedq/compression/codec.hpp"
#include "fedq/compression/quantize.hpp"
#include "fedq/federation/federation.hpp"

namespace fedq::compression {

// Whole-model transport through quantization and the range coder. The
// receiver sees the dequantized values; the wire size is the FQC1 container.
class CompressedChannel final : public federation::Channel {
 public:
  explicit CompressedChannel(QuantConfig config);
  nn::ParameterSet transmit(const nn::ParameterSet& params, std::uint64_t& bytes) const override;
  const QuantConfig& config() const noexcept { return config_; }

 private:
  QuantConfig config_;
};

}  // namespace fedq::compression
