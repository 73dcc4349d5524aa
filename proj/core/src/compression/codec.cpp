#include "fedq/compression/codec.hpp"

#include <zlib.h>

#include <array>
#include <bit>
#include <cstdlib>
#include <limits>
#include <memory>

#include "fedq/binary_io.hpp"
#include "fedq/error.hpp"

namespace fedq::compression {
namespace {

constexpr std::uint32_t kTop = 1u << 24;
constexpr std::uint32_t kProbBits = 16;
constexpr std::uint32_t kProbOne = 1u << kProbBits;
constexpr std::uint32_t kProbMin = 32;
constexpr int kFastShift = 4;
constexpr int kSlowShift = 7;
constexpr int kMaxPrefix = 31;

std::uint32_t clamp_p0(std::uint32_t p) {
  return std::min(std::max(p, kProbMin), kProbOne - kProbMin);
}

struct IndexContexts {
  std::array<BinContext, 2> significance;  // previous index zero / non-zero
  BinContext sign;
  std::array<BinContext, kMaxPrefix + 1> prefix;
  std::array<std::array<BinContext, kMaxPrefix>, kMaxPrefix + 1> suffix;  // [prefix length][bit]
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  return static_cast<std::uint32_t>(
      ::crc32(::crc32(0L, Z_NULL, 0), bytes.data(), static_cast<uInt>(bytes.size())));
}

constexpr std::uint16_t kVersion = 1;

}  // namespace

void BinContext::update(int bit) noexcept {
  if (bit == 0) {
    fast_ += (kProbOne - fast_) >> kFastShift;
    slow_ += (kProbOne - slow_) >> kSlowShift;
  } else {
    fast_ -= fast_ >> kFastShift;
    slow_ -= slow_ >> kSlowShift;
  }
}

void RangeEncoder::encode(int bit, BinContext& ctx) {
  const std::uint32_t bound = (range_ >> kProbBits) * clamp_p0(ctx.p0());
  if (bit == 0) {
    range_ = bound;
  } else {
    low_ += bound;
    range_ -= bound;
  }
  ctx.update(bit);
  while (range_ < kTop) {
    range_ <<= 8;
    shift_low();
  }
}

void RangeEncoder::shift_low() {
  if (static_cast<std::uint32_t>(low_) < 0xFF000000u || (low_ >> 32) != 0) {
    const auto carry = static_cast<std::uint8_t>(low_ >> 32);
    std::uint8_t temp = cache_;
    do {
      out_.push_back(static_cast<std::uint8_t>(temp + carry));
      temp = 0xFF;
    } while (--cache_size_ != 0);
    cache_ = static_cast<std::uint8_t>(low_ >> 24);
  }
  ++cache_size_;
  low_ = (low_ & 0x00FFFFFFu) << 8;
}

std::vector<std::uint8_t> RangeEncoder::finish() {
  for (int i = 0; i < 5; ++i) shift_low();
  return std::move(out_);
}

RangeDecoder::RangeDecoder(std::span<const std::uint8_t> bytes, std::size_t base_offset)
    : bytes_(bytes), base_(base_offset) {
  if (next() != 0) throw DecodingError("range-coded stream must open with a zero byte", base_);
  for (int i = 0; i < 4; ++i) code_ = (code_ << 8) | next();
}

std::uint8_t RangeDecoder::next() {
  if (pos_ >= bytes_.size()) throw DecodingError("range-coded stream ends early", base_ + pos_);
  return bytes_[pos_++];
}

int RangeDecoder::decode(BinContext& ctx) {
  const std::uint32_t bound = (range_ >> kProbBits) * clamp_p0(ctx.p0());
  int bit;
  if (code_ < bound) {
    range_ = bound;
    bit = 0;
  } else {
    code_ -= bound;
    range_ -= bound;
    bit = 1;
  }
  ctx.update(bit);
  while (range_ < kTop) {
    range_ <<= 8;
    code_ = (code_ << 8) | next();
  }
  return bit;
}

std::vector<std::uint8_t> encode_indices(std::span<const std::int32_t> indices) {
  auto ctx = std::make_unique<IndexContexts>();
  RangeEncoder enc;
  int prev_nonzero = 0;
  for (std::int32_t x : indices) {
    const int sig = x != 0;
    enc.encode(sig, ctx->significance[prev_nonzero]);
    prev_nonzero = sig;
    if (!sig) continue;
    if (x == std::numeric_limits<std::int32_t>::min()) throw EncodingError("index -2^31 is outside the coded range");
    enc.encode(x < 0, ctx->sign);
    // |x| - 1 + 1 = |x| lies in [2^k, 2^(k+1)).
    const auto mag = static_cast<std::uint32_t>(std::abs(static_cast<std::int64_t>(x)));
    const int k = std::bit_width(mag) - 1;
    for (int i = 0; i < k; ++i) enc.encode(1, ctx->prefix[static_cast<std::size_t>(i)]);
    enc.encode(0, ctx->prefix[static_cast<std::size_t>(k)]);
    for (int b = k - 1; b >= 0; --b) {
      enc.encode(static_cast<int>((mag >> b) & 1u),
                 ctx->suffix[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)]);
    }
  }
  return enc.finish();
}

std::vector<std::int32_t> decode_indices(std::span<const std::uint8_t> bytes, std::size_t count,
                                         std::size_t base_offset) {
  auto ctx = std::make_unique<IndexContexts>();
  RangeDecoder dec(bytes, base_offset);
  std::vector<std::int32_t> out;
  out.reserve(std::min<std::size_t>(count, bytes.size() * 4096));
  int prev_nonzero = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const int sig = dec.decode(ctx->significance[prev_nonzero]);
    prev_nonzero = sig;
    if (!sig) {
      out.push_back(0);
      continue;
    }
    const int negative = dec.decode(ctx->sign);
    int k = 0;
    while (dec.decode(ctx->prefix[static_cast<std::size_t>(k)])) {
      if (++k > 30) throw DecodingError("exponential-Golomb prefix too long", base_offset + dec.consumed());
    }
    std::uint32_t mag = 1;
    for (int b = k - 1; b >= 0; --b) {
      mag = (mag << 1) |
            static_cast<std::uint32_t>(dec.decode(ctx->suffix[static_cast<std::size_t>(k)][static_cast<std::size_t>(b)]));
    }
    if (mag > static_cast<std::uint32_t>(std::numeric_limits<std::int32_t>::max())) {
      throw DecodingError("index magnitude exceeds int32", base_offset + dec.consumed());
    }
    const auto v = static_cast<std::int32_t>(mag);
    out.push_back(negative ? -v : v);
  }
  if (dec.consumed() != bytes.size()) {
    throw DecodingError("range-coded stream has " + std::to_string(bytes.size() - dec.consumed()) +
                            " unused bytes",
                        base_offset + dec.consumed());
  }
  return out;
}

std::vector<std::uint8_t> encode_model(const std::vector<QuantizedTensor>& model) {
  std::vector<std::vector<std::uint8_t>> streams;
  streams.reserve(model.size());
  for (const auto& q : model) {
    if (nn::element_count(q.shape) != q.indices.size()) {
      throw EncodingError("tensor '" + q.name + "' has " + std::to_string(q.indices.size()) +
                          " indices for shape " + nn::shape_string(q.shape));
    }
    streams.push_back(encode_indices(q.indices));
  }
  ByteWriter w;
  w.magic("FQC1");
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(model.size()));
  std::uint64_t offset = 0;
  for (std::size_t t = 0; t < model.size(); ++t) {
    const auto& q = model[t];
    w.string(q.name);
    w.u32(static_cast<std::uint32_t>(q.shape.size()));
    for (auto d : q.shape) w.u32(static_cast<std::uint32_t>(d));
    w.i32(q.qp);
    w.f64(q.step);
    w.u64(offset);
    w.u64(streams[t].size());
    w.u32(crc32_of(streams[t]));
    offset += streams[t].size();
  }
  for (const auto& s : streams) w.raw(s);
  return w.take();
}

std::vector<QuantizedTensor> decode_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("FQC1");
  const std::size_t version_at = r.offset();
  const std::uint16_t version = r.u16();
  if (version != kVersion) throw DecodingError("unsupported FQC1 version " + std::to_string(version), version_at);
  const std::uint32_t count = r.u32();
  struct Entry {
    QuantizedTensor q;
    std::uint64_t offset, length;
    std::uint32_t crc;
    std::size_t dir_at;
  };
  std::vector<Entry> dir;
  std::uint64_t expected_offset = 0;
  for (std::uint32_t t = 0; t < count; ++t) {
    Entry e;
    e.dir_at = r.offset();
    e.q.name = r.string();
    const std::uint32_t rank = r.u32();
    if (rank > r.remaining() / 4) throw DecodingError("tensor rank exceeds data", e.dir_at);
    for (std::uint32_t d = 0; d < rank; ++d) e.q.shape.push_back(r.u32());
    e.q.qp = r.i32();
    e.q.step = r.f64();
    e.offset = r.u64();
    e.length = r.u64();
    e.crc = r.u32();
    if (e.offset != expected_offset) {
      throw DecodingError("payload of tensor '" + e.q.name + "' is not contiguous", e.dir_at);
    }
    expected_offset += e.length;
    dir.push_back(std::move(e));
  }
  const std::size_t blob_at = r.offset();
  if (r.remaining() != expected_offset) {
    throw DecodingError("payload blob holds " + std::to_string(r.remaining()) + " bytes, directory expects " +
                            std::to_string(expected_offset),
                        blob_at);
  }
  std::vector<QuantizedTensor> out;
  out.reserve(dir.size());
  for (auto& e : dir) {
    const std::size_t at = blob_at + e.offset;
    auto payload = bytes.subspan(at, e.length);
    if (crc32_of(payload) != e.crc) {
      throw DecodingError("checksum mismatch in payload of tensor '" + e.q.name + "'", at);
    }
    e.q.indices = decode_indices(payload, nn::element_count(e.q.shape), at);
    out.push_back(std::move(e.q));
  }
  return out;
}

}  // namespace fedq::compression
