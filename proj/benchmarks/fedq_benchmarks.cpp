#include <benchmark/benchmark.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "fedq/compression/codec.hpp"
#include "fedq/compression/quantize.hpp"
#include "fedq/federation/federation.hpp"
#include "fedq/models/models.hpp"
#include "fedq/nn/training.hpp"
#include "fedq/rng.hpp"

using namespace fedq;

namespace {

nn::Batch history_batch(std::size_t rows, std::size_t width, std::size_t vocab, Rng& rng) {
  nn::Batch b;
  b.rows = rows;
  nn::IndexField f;
  f.width = width;
  f.indices.assign(rows * width, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    f.lengths.push_back(static_cast<std::uint32_t>(width));
    for (std::size_t s = 0; s < width; ++s) {
      f.indices[r * width + s] = static_cast<std::int32_t>(1 + rng.uniform_index(vocab));
    }
    b.targets.push_back(static_cast<std::int32_t>(rng.uniform_index(vocab)));
  }
  b.sequences.emplace(models::kHistoryField, std::move(f));
  return b;
}

std::vector<std::int32_t> laplacian_indices(std::size_t n, double scale, Rng& rng) {
  std::vector<double> values(n);
  for (double& v : values) v = rng.uniform() < 0.5 ? -scale * std::log(1.0 - rng.uniform()) : scale * std::log(1.0 - rng.uniform());
  return compression::quantize_values(values, 1.0);
}

}  // namespace

static void BM_CandidateGeneratorTrainStep(benchmark::State& state) {
  models::CandidateGeneratorConfig c;
  c.output_vocab_size = 500;
  c.input_vocab_size = 501;
  c.embedding_dim = 16;
  c.hidden_sizes = {64, 32};
  c.norm_groups = 4;
  const auto built = models::build_candidate_generator(c, 1);
  nn::Network net(built.spec);
  Rng rng(2);
  const auto batch = history_batch(static_cast<std::size_t>(state.range(0)), 7, 500, rng);
  auto params = built.params;
  for (auto _ : state) {
    const auto g = nn::compute_gradients(net, params, batch, nn::LossKind::SoftmaxCrossEntropy, nn::Mode::Train);
    nn::sgd_step_inplace(params, g.grads, 0.01);
    benchmark::DoNotOptimize(params);
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_CandidateGeneratorTrainStep)->Arg(32)->Arg(256);

static void BM_EncodeIndices(benchmark::State& state) {
  Rng rng(3);
  const auto indices = laplacian_indices(static_cast<std::size_t>(state.range(0)), 4.0, rng);
  for (auto _ : state) benchmark::DoNotOptimize(compression::encode_indices(indices));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncodeIndices)->Arg(1 << 12)->Arg(1 << 20);

static void BM_DecodeIndices(benchmark::State& state) {
  Rng rng(4);
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto bytes = compression::encode_indices(laplacian_indices(n, 4.0, rng));
  for (auto _ : state) benchmark::DoNotOptimize(compression::decode_indices(bytes, n));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_DecodeIndices)->Arg(1 << 12)->Arg(1 << 20);

static void BM_Aggregate(benchmark::State& state) {
  Rng rng(5);
  nn::ParameterSet update;
  nn::Tensor t({static_cast<std::size_t>(state.range(0))});
  for (double& v : t.values()) v = rng.normal(0.0, 1.0);
  update.add("w", std::move(t));
  const int contributions = 10;
  for (auto _ : state) {
    federation::AggregationState agg(update, contributions);
    for (int k = 0; k < contributions; ++k) agg.accumulate(update, 1.0);
    benchmark::DoNotOptimize(agg.result());
  }
  state.SetItemsProcessed(state.iterations() * contributions * state.range(0));
}
BENCHMARK(BM_Aggregate)->Arg(1 << 16)->Arg(1 << 20);

BENCHMARK_MAIN();
