#include "fedq/compression/channel.hpp"

namespace fedq::compression {

CompressedChannel::CompressedChannel(QuantConfig config) : config_(std::move(config)) { config_.validate(); }

nn::ParameterSet CompressedChannel::transmit(const nn::ParameterSet& params, std::uint64_t& bytes) const {
  const auto blob = encode_model(quantize_model(params, config_));
  bytes = blob.size();
  return dequantize_model(decode_model(blob));
}

}  // namespace fedq::compression
