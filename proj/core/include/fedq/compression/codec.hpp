#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "fedq/compression/quantize.hpp"

namespace fedq::compression {

// Adaptive binary range coder.
//
// 32-bit range with carry propagation through a cached byte; a stream opens
// with one zero byte and ends after a five-byte flush, so the decoder
// consumes exactly the bytes the encoder produced. Each context keeps two
// probability estimates of a zero bin, 16-bit fixed point, adapting with
// shifts 4 (fast) and 7 (slow); the coder uses their mean.
class BinContext {
 public:
  std::uint32_t p0() const noexcept { return (fast_ + slow_) >> 1; }
  void update(int bit) noexcept;

 private:
  std::uint32_t fast_ = 1u << 15;
  std::uint32_t slow_ = 1u << 15;
};

class RangeEncoder {
 public:
  void encode(int bit, BinContext& ctx);
  std::vector<std::uint8_t> finish();

 private:
  void shift_low();

  std::uint64_t low_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint8_t cache_ = 0;
  std::uint64_t cache_size_ = 1;
  std::vector<std::uint8_t> out_;
};

class RangeDecoder {
 public:
  // `base_offset` is added to offsets reported in DecodingError.
  RangeDecoder(std::span<const std::uint8_t> bytes, std::size_t base_offset = 0);
  int decode(BinContext& ctx);
  std::size_t consumed() const noexcept { return pos_; }

 private:
  std::uint8_t next();

  std::span<const std::uint8_t> bytes_;
  std::size_t base_ = 0;
  std::size_t pos_ = 0;
  std::uint32_t range_ = 0xFFFFFFFFu;
  std::uint32_t code_ = 0;
};

// Index stream of one tensor. Per index: a significance bin (context chosen
// by whether the previous index was zero); for non-zero indices a sign bin,
// then |x| - 1 as order-0 exponential Golomb: a unary prefix with one context
// per prefix position, and suffix bits MSB first with one context per
// (prefix length, bit position).
std::vector<std::uint8_t> encode_indices(std::span<const std::int32_t> indices);
// Throws DecodingError on malformed input or when the stream does not end
// exactly at the end of `bytes`.
std::vector<std::int32_t> decode_indices(std::span<const std::uint8_t> bytes, std::size_t count,
                                         std::size_t base_offset = 0);

// Compressed model container (little-endian):
//   "FQC1", u16 version (1), u32 tensor count, then per tensor
//   u32 name length, name, u32 rank, rank x u32 dims, i32 qp,
//   u64 step bits (float64), u64 payload offset, u64 payload length,
//   u32 CRC-32 of the payload bytes;
//   then the payload blob (tensor streams in declaration order, offsets
//   relative to the blob start).
std::vector<std::uint8_t> encode_model(const std::vector<QuantizedTensor>& model);
std::vector<QuantizedTensor> decode_model(std::span<const std::uint8_t> bytes);

}  // namespace fedq::compression
