#include <doctest.h>

#include <cmath>
#include <limits>

#include "fedq/compression/channel.hpp"
#include "fedq/compression/codec.hpp"
#include "fedq/compression/quantize.hpp"
#include "fedq/error.hpp"
#include "fedq/rng.hpp"

using namespace fedq;
using namespace fedq::compression;

namespace {

// Random index array with the given zero fraction and a heavy-tailed magnitude.
std::vector<std::int32_t> random_indices(Rng& rng, std::size_t n, double sparsity, double scale) {
  std::vector<std::int32_t> v(n);
  for (auto& x : v) {
    if (rng.uniform() < sparsity) continue;
    const double mag = 1.0 + rng.exponential(1.0 / scale);
    x = static_cast<std::int32_t>(std::min(mag, 2.0e9)) * (rng.uniform() < 0.5 ? -1 : 1);
  }
  return v;
}

nn::ParameterSet random_params(Rng& rng, double sd) {
  nn::ParameterSet p;
  for (auto [name, rows, cols] : {std::tuple{"00.embedding.weight", 50, 8}, {"01.fc.weight", 16, 8}, {"01.fc.bias", 16, 1}}) {
    std::vector<double> v(static_cast<std::size_t>(rows * cols));
    for (double& x : v) x = rng.normal(0.0, sd);
    p.add(name, nn::Tensor({static_cast<std::size_t>(rows), static_cast<std::size_t>(cols)}, std::move(v)));
  }
  return p;
}

}  // namespace

TEST_CASE("step sizes under the masked-AND rule") {
  for (int f : {0, 1, 2, 3}) CHECK(step_size(0, f) == 1.0);
  CHECK(step_size(-30, 2) == 0.005859375);
  CHECK(step_size(-30, 2) == 6.0 * std::pow(2.0, -10));
  CHECK(step_size(-48, 2) == 4.0 * std::pow(2.0, -14));
  CHECK(step_size(4, 2) == 2.0);
  CHECK(step_size(-1, 2) == 7.0 / 8.0);
  CHECK_THROWS_AS(step_size(0, -1), ConfigError);
}

TEST_CASE("step size grows monotonically with qp") {
  for (int f : {0, 1, 2, 3}) {
    for (int qp = -60; qp < 20; ++qp) CHECK(step_size(qp, f) < step_size(qp + 1, f));
  }
}

TEST_CASE("literal step rule goes non-positive for low qp") {
  CHECK(step_size(0, 2, StepRule::Literal) == 7.0 / 4.0);
  CHECK(step_size(-30, 2, StepRule::Literal) < 0.0);
  QuantConfig c;
  c.rule = StepRule::Literal;
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("positive"), ConfigError);
  CHECK(parse_step_rule("literal") == StepRule::Literal);
  c.rule = StepRule::MaskedAnd;
  c.per_tensor_qp_offset["01.fc.bias"] = 6;
  CHECK(c.qp_for("01.fc.bias") == -24);
  CHECK(c.qp_for("other") == -30);
}

TEST_CASE("quantization basics") {
  const double d = step_size(-30, 2);
  auto zeros = quantize(nn::Tensor({5}), d);
  CHECK(zeros.indices == std::vector<std::int32_t>(5, 0));
  auto exact = quantize(nn::Tensor({4}, {3 * d, -7 * d, 0.0, 1000 * d}), d);
  CHECK(exact.indices == std::vector<std::int32_t>{3, -7, 0, 1000});
  CHECK(dequantize(exact).values()[1] == -7 * d);
  // Ties go away from zero.
  CHECK(quantize_values(std::vector<double>{0.5, -0.5, 1.5, -2.5}, 1.0) == std::vector<std::int32_t>{1, -1, 2, -3});
  auto again = quantize(dequantize(exact), d);
  CHECK(again.indices == exact.indices);
  CHECK_THROWS_AS(quantize_values(std::vector<double>{1.0}, 0.0), EncodingError);
  CHECK_THROWS_AS(quantize_values(std::vector<double>{1.0}, -1.0), EncodingError);
  CHECK_THROWS_AS(quantize_values(std::vector<double>{1e6}, 1e-6), EncodingError);
  CHECK_THROWS_AS(quantize_values(std::vector<double>{NAN}, 1.0), EncodingError);
}

TEST_CASE("reconstruction error is at most half a step, elementwise") {
  Rng rng(10);
  for (int t = 0; t < 100; ++t) {
    const int qp = -48 + static_cast<int>(rng.uniform_index(49));
    const double d = step_size(qp, 2);
    std::vector<double> v(1 + rng.uniform_index(500));
    for (double& x : v) x = rng.normal(0.0, 0.1 + rng.uniform());
    auto idx = quantize_values(v, d);
    for (std::size_t i = 0; i < v.size(); ++i) {
      CHECK(std::abs(static_cast<double>(idx[i]) * d - v[i]) <= d / 2);
    }
  }
}

TEST_CASE("entropy of index histograms") {
  CHECK(weight_entropy(std::vector<std::int32_t>(10, 4)) == 0.0);
  CHECK(weight_entropy(std::vector<std::int32_t>{1, -1, 1, -1}) == doctest::Approx(1.0));
  for (int k = 1; k <= 10; ++k) {
    std::vector<std::int32_t> v;
    for (int rep = 0; rep < 3; ++rep) {
      for (int i = 0; i < (1 << k); ++i) v.push_back(i - (1 << (k - 1)));
    }
    CHECK(std::abs(weight_entropy(v) - k) <= 1e-9);
  }
  CHECK_THROWS_AS(weight_entropy(std::vector<std::int32_t>{}), ArgumentError);
}

TEST_CASE("space saving") {
  CHECK(space_saving(400, 400) == 0.0);
  CHECK(space_saving(400, 100) == 0.75);
  CHECK_THROWS_AS(space_saving(0, 1), ArgumentError);
}

TEST_CASE("index streams round-trip across sparsities and sizes") {
  Rng rng(42);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = t < 5 ? static_cast<std::size_t>(t) : 1 + rng.uniform_index(5000);
    const double sparsity = rng.uniform(0.0, 0.99);
    const double scale = std::pow(10.0, rng.uniform(0.0, 6.0));
    auto v = random_indices(rng, n, sparsity, scale);
    auto bytes = encode_indices(v);
    REQUIRE(decode_indices(bytes, n) == v);
  }
  std::vector<std::int32_t> extremes = {std::numeric_limits<std::int32_t>::max(),
                                        -std::numeric_limits<std::int32_t>::max(), 1, -1, 0, 0, 65536};
  CHECK(decode_indices(encode_indices(extremes), extremes.size()) == extremes);
  CHECK_THROWS_AS(encode_indices(std::vector<std::int32_t>{std::numeric_limits<std::int32_t>::min()}),
                  EncodingError);
}

TEST_CASE("all-zero tensor of a million indices codes to under 2 KB") {
  std::vector<std::int32_t> v(1'000'000, 0);
  auto bytes = encode_indices(v);
  MESSAGE("payload " << bytes.size() << " bytes");
  CHECK(bytes.size() < 2048);
  CHECK(decode_indices(bytes, v.size()) == v);
}

TEST_CASE("payload stays within 1.2x the static entropy on stationary data") {
  Rng rng(3);
  for (double scale : {0.7, 3.0, 40.0}) {
    std::vector<std::int32_t> v(200'000);
    for (auto& x : v) {
      // Discretized Laplacian.
      const double e = rng.exponential(1.0 / scale);
      x = static_cast<std::int32_t>(std::lround(e)) * (rng.uniform() < 0.5 ? -1 : 1);
    }
    const double entropy_bits = weight_entropy(v) * static_cast<double>(v.size());
    const double payload_bits = 8.0 * static_cast<double>(encode_indices(v).size());
    MESSAGE("scale " << scale << ": " << payload_bits / entropy_bits << " x entropy");
    CHECK(payload_bits <= 1.2 * entropy_bits + 8 * 16);
  }
}

TEST_CASE("model container round-trips and is deterministic") {
  Rng rng(5);
  auto params = random_params(rng, 0.3);
  QuantConfig cfg;
  cfg.per_tensor_qp_offset["01.fc.bias"] = 4;
  auto q = quantize_model(params, cfg);
  CHECK(q[2].qp == -26);
  auto blob = encode_model(q);
  CHECK(encode_model(q) == blob);
  auto back = decode_model(blob);
  CHECK(back == q);
  auto rebuilt = dequantize_model(back);
  CHECK(rebuilt.congruent_with(params));

  auto empty = encode_model({});
  CHECK(empty.size() == 10);
  CHECK(decode_model(empty).empty());
}

TEST_CASE("damaged containers raise decoding errors with offsets") {
  Rng rng(6);
  auto blob = encode_model(quantize_model(random_params(rng, 0.3), QuantConfig{}));
  for (std::size_t cut = 0; cut < blob.size(); cut += 7) {
    CHECK_THROWS_AS(decode_model(std::span(blob).first(cut)), DecodingError);
  }
  CHECK_THROWS_AS(decode_model(std::span(blob).first(blob.size() - 1)), DecodingError);
  auto extra = blob;
  extra.push_back(0);
  CHECK_THROWS_AS(decode_model(extra), DecodingError);
  for (std::size_t at = blob.size() - 40; at < blob.size(); at += 5) {
    auto flipped = blob;
    flipped[at] ^= 0x10;
    try {
      decode_model(flipped);
      FAIL("corruption at byte " << at << " went unnoticed");
    } catch (const DecodingError& e) {
      CHECK(e.offset() <= blob.size());
    }
  }
}

TEST_CASE("compressed size does not grow as qp rises") {
  Rng rng(8);
  auto params = random_params(rng, 0.2);
  std::uint64_t previous = std::numeric_limits<std::uint64_t>::max();
  for (int qp : {-48, -43, -38, -30, -24, -12, 0}) {
    QuantConfig cfg;
    cfg.qp = qp;
    const auto bytes = encode_model(quantize_model(params, cfg)).size();
    CHECK(bytes <= previous);
    previous = bytes;
  }
}

TEST_CASE("compressed channel reconstructs within half a step") {
  Rng rng(9);
  auto params = random_params(rng, 0.5);
  QuantConfig cfg;
  cfg.qp = -38;
  CompressedChannel channel(cfg);
  std::uint64_t bytes = 0;
  auto got = channel.transmit(params, bytes);
  CHECK(bytes > 0);
  CHECK(bytes < uncompressed_bytes(params));
  const double d = step_size(-38, 2);
  for (std::size_t e = 0; e < params.size(); ++e) {
    for (std::size_t i = 0; i < params.entry(e).tensor.size(); ++i) {
      CHECK(std::abs(got.entry(e).tensor[i] - params.entry(e).tensor[i]) <= d / 2);
    }
  }
  QuantConfig bad;
  bad.rule = StepRule::Literal;
  CHECK_THROWS_AS(CompressedChannel{bad}, ConfigError);
}
