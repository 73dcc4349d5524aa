#include <doctest.h>

#include <cmath>
#include <numeric>

#include "../support/fixtures.hpp"
#include "../support/gradcheck_support.hpp"
#include "fedq/error.hpp"
#include "fedq/nn/network.hpp"
#include "fedq/nn/serialize.hpp"
#include "fedq/nn/training.hpp"

using namespace fedq;
using namespace fedq::nn;

namespace {

Batch dense_batch(std::vector<std::vector<double>> rows_in) {
  // One-hot history over a tiny identity embedding turns index r into row r.
  Batch b;
  b.rows = rows_in.size();
  IndexField f{1, {}, {}};
  for (std::size_t r = 0; r < rows_in.size(); ++r) {
    f.indices.push_back(static_cast<std::int32_t>(r));
    f.lengths.push_back(1);
    b.targets.push_back(0);
  }
  b.sequences.emplace("x", std::move(f));
  return b;
}

// Embedding table whose rows are the given vectors, so the network input is
// exactly those vectors.
ParameterSet table_params(const std::vector<std::vector<double>>& rows) {
  ParameterSet p;
  std::vector<double> flat;
  for (const auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  p.add("00.embedding.weight", Tensor({rows.size(), rows[0].size()}, flat));
  return p;
}

}  // namespace

TEST_CASE("ReLU zeroes negatives and keeps positives") {
  std::vector<std::vector<double>> x = {{-1.0, 0.0, 2.0}};
  Network net({Embedding{"x", 1, 3}, MeanPoolOverSequence{}, ReLU{}});
  auto out = net.forward(table_params(x), dense_batch(x)).logits;
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 0.0);
  CHECK(out[2] == 2.0);
}

TEST_CASE("GroupNorm on a constant group yields beta") {
  std::vector<std::vector<double>> x = {{3.0, 3.0, 3.0, 3.0, 1.0, 2.0, 5.0, 7.0}};
  Network net({Embedding{"x", 1, 8}, MeanPoolOverSequence{}, GroupNorm{2, 8, 1e-5}});
  ParameterSet p = table_params(x);
  Tensor gamma({8});
  gamma.fill(2.0);
  p.add("02.groupnorm.gamma", gamma);
  p.add("02.groupnorm.beta", Tensor({8}, {0.5, -0.25, 1.0, 4.0, 0, 0, 0, 0}));
  auto out = net.forward(p, dense_batch(x)).logits;
  CHECK(out[0] == 0.5);
  CHECK(out[1] == -0.25);
  CHECK(out[2] == 1.0);
  CHECK(out[3] == 4.0);
}

TEST_CASE("GroupNorm normalizes each group to zero mean and unit variance") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t groups = 4;
    const std::size_t channels = 32;
    std::vector<std::vector<double>> x(3, std::vector<double>(channels));
    for (auto& row : x) {
      for (double& v : row) v = rng.normal(rng.uniform(-5, 5), rng.uniform(0.5, 4));
    }
    Network net({Embedding{"x", 3, channels}, MeanPoolOverSequence{}, GroupNorm{groups, channels, 1e-5}});
    ParameterSet p = table_params(x);
    Tensor gamma({channels});
    gamma.fill(1.0);
    p.add("02.groupnorm.gamma", gamma);
    p.add("02.groupnorm.beta", Tensor({channels}));
    auto out = net.forward(p, dense_batch(x)).logits;
    const std::size_t m = channels / groups;
    for (std::size_t r = 0; r < 3; ++r) {
      for (std::size_t g = 0; g < groups; ++g) {
        double mean = 0;
        double var = 0;
        for (std::size_t k = 0; k < m; ++k) mean += out.at(r, g * m + k);
        mean /= m;
        for (std::size_t k = 0; k < m; ++k) var += std::pow(out.at(r, g * m + k) - mean, 2);
        var /= m;
        // With the epsilon in the denominator the normalized variance is
        // raw_var / (raw_var + eps).
        double raw_mean = 0;
        double raw_var = 0;
        for (std::size_t k = 0; k < m; ++k) raw_mean += x[r][g * m + k];
        raw_mean /= m;
        for (std::size_t k = 0; k < m; ++k) raw_var += std::pow(x[r][g * m + k] - raw_mean, 2);
        raw_var /= m;
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - raw_var / (raw_var + 1e-5)) < 1e-6);
        if (raw_var > 10.0) CHECK(std::abs(var - 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("Embedding lookup returns the indexed row") {
  Network net({Embedding{"x", 4, 2}, MeanPoolOverSequence{}});
  ParameterSet p;
  p.add("00.embedding.weight", Tensor({4, 2}, {1, 0, 0, 1, 1, 0, 0, 1}));
  Batch b;
  b.rows = 1;
  b.sequences.emplace("x", IndexField{1, {2}, {1}});
  auto out = net.forward(p, b).logits;
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 0.0);
}

TEST_CASE("forward reports out-of-range embedding index") {
  Network net({Embedding{"x", 4, 2}, MeanPoolOverSequence{}});
  Rng rng(1);
  auto p = net.init_parameters(rng);
  Batch b;
  b.rows = 1;
  b.sequences.emplace("x", IndexField{1, {7}, {1}});
  CHECK_THROWS_WITH_AS(net.forward(p, b), doctest::Contains("embedding index 7"), DataError);
}

TEST_CASE("invalid specs are configuration errors") {
  CHECK_THROWS_AS(Network({Embedding{"x", 4, 2}}), ConfigError);  // no pooling
  CHECK_THROWS_AS(Network({Embedding{"x", 4, 6}, MeanPoolOverSequence{}, GroupNorm{4, 6, 1e-5}}),
                  ConfigError);
  CHECK_THROWS_AS(Network({Embedding{"x", 0, 2}, MeanPoolOverSequence{}}), ConfigError);
  CHECK_THROWS_AS(Network({Embedding{"x", 4, 2}, MeanPoolOverSequence{}, FullyConnected{3, 1}}), ConfigError);
}

TEST_CASE("backward of a zero upstream gradient is all zero") {
  auto built = models::build_candidate_generator({21, 20, 4, {8}, models::NormKind::GroupNorm, 2}, 3);
  Network net(built.spec);
  Rng rng(5);
  auto batch = testing::random_history_batch(rng, 4, 5, 21, 20);
  auto fwd = net.forward(built.params, batch, Mode::Train);
  auto grads = net.backward(built.params, fwd.cache, Tensor::zeros(fwd.logits.shape()));
  for (const auto& e : grads) {
    for (double v : e.tensor.values()) CHECK(v == 0.0);
  }
}

TEST_CASE("backward of a 1x1 linear layer gives the input") {
  // loss = w * x via an identity embedding feeding FC(1 -> 1) with bias 0.
  Network net({Embedding{"x", 1, 1}, MeanPoolOverSequence{}, FullyConnected{1, 1}});
  ParameterSet p;
  p.add("00.embedding.weight", Tensor({1, 1}, {3.0}));
  p.add("02.fc.weight", Tensor({1, 1}, {2.0}));
  p.add("02.fc.bias", Tensor({1}, {0.0}));
  Batch b;
  b.rows = 1;
  b.sequences.emplace("x", IndexField{1, {0}, {1}});
  auto fwd = net.forward(p, b);
  CHECK(fwd.logits[0] == 6.0);
  auto g = net.backward(p, fwd.cache, Tensor({1, 1}, {1.0}));
  CHECK(g.at("02.fc.weight")[0] == 3.0);
  CHECK(g.at("02.fc.bias")[0] == 1.0);
  CHECK(g.at("00.embedding.weight")[0] == 2.0);
}

TEST_CASE("backward rejects a cache from another network") {
  Network a({Embedding{"x", 3, 2}, MeanPoolOverSequence{}});
  Network b({Embedding{"x", 3, 2}, MeanPoolOverSequence{}, FullyConnected{2, 2}});
  Rng rng(1);
  auto pa = a.init_parameters(rng);
  auto pb = b.init_parameters(rng);
  Batch batch;
  batch.rows = 1;
  batch.sequences.emplace("x", IndexField{1, {1}, {1}});
  auto fwd = a.forward(pa, batch);
  CHECK_THROWS_AS(b.backward(pb, fwd.cache, Tensor({1, 2})), InternalError);
  CHECK_THROWS_AS(a.backward(pa, fwd.cache, Tensor({2, 2})), InternalError);
}

TEST_CASE("backward matches finite differences on random small models") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    Rng rng(100 + seed);
    models::CandidateGeneratorConfig cg{41, 40, 8, {32, 16}, models::NormKind::GroupNorm, 4};
    auto built = models::build_candidate_generator(cg, seed);
    Network net(built.spec);
    auto batch = testing::random_history_batch(rng, 6, 5, 41, 40);
    auto report = testing::check_gradients(net, built.params, batch, LossKind::SoftmaxCrossEntropy);
    CHECK(report.max_relative_error < 1e-4);
    CHECK(report.kink_skipped * 100 <= report.checked);
  }
}

TEST_CASE("BatchNorm gradients match finite differences in train mode") {
  Rng rng(9);
  models::CandidateGeneratorConfig cg{11, 10, 4, {8}, models::NormKind::BatchNorm, 1};
  auto built = models::build_candidate_generator(cg, 9);
  Network net(built.spec);
  auto batch = testing::random_history_batch(rng, 6, 3, 11, 10);
  auto report = testing::check_gradients(net, built.params, batch, LossKind::SoftmaxCrossEntropy);
  CHECK(report.max_relative_error < 1e-4);
}

TEST_CASE("BatchNorm running statistics follow the momentum rule") {
  Network net({Embedding{"x", 2, 1}, MeanPoolOverSequence{}, BatchNorm{1, 1e-5, 0.1}});
  ParameterSet p;
  p.add("00.embedding.weight", Tensor({2, 1}, {1.0, 3.0}));
  Tensor gamma({1});
  gamma.fill(1.0);
  p.add("02.batchnorm.gamma", gamma);
  p.add("02.batchnorm.beta", Tensor({1}));
  auto buffers = net.init_buffers();
  Batch b;
  b.rows = 2;
  b.sequences.emplace("x", IndexField{1, {0, 1}, {1, 1}});
  net.forward(p, b, Mode::Train, &buffers);
  // batch mean 2, unbiased variance 2
  CHECK(buffers.at("02.batchnorm.running_mean")[0] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(buffers.at("02.batchnorm.running_var")[0] == doctest::Approx(0.9 + 0.2).epsilon(1e-15));
  CHECK_THROWS_AS(net.forward(p, b, Mode::Eval, nullptr), ConfigError);
  CHECK_NOTHROW(net.forward(p, b, Mode::Eval, &buffers));
}

TEST_CASE("cross-entropy of uniform logits is ln K") {
  Tensor logits({2, 7});
  std::vector<std::int32_t> t = {0, 6};
  auto r = loss_and_grad(LossKind::SoftmaxCrossEntropy, logits, t);
  CHECK(r.loss == doctest::Approx(std::log(7.0)).epsilon(1e-14));
}

TEST_CASE("cross-entropy vanishes for a confident correct prediction") {
  Tensor logits({1, 4});
  logits[2] = 50.0;
  std::vector<std::int32_t> t = {2};
  CHECK(loss_and_grad(LossKind::SoftmaxCrossEntropy, logits, t).loss < 1e-9);
}

TEST_CASE("loss gradients match finite differences on random logits") {
  Rng rng(3);
  for (LossKind kind : {LossKind::SoftmaxCrossEntropy, LossKind::MeanSquaredError, LossKind::SumOfBoth}) {
    Tensor logits({4, 10});
    for (double& v : logits.values()) v = rng.normal(0, 2);
    std::vector<std::int32_t> t = {0, 3, 9, 5};
    auto r = loss_and_grad(kind, logits, t);
    // Five-point stencil: truncation O(eps^4), so eps can stay large enough
    // that round-off in the loss does not dominate.
    const double eps = 1e-3;
    auto shifted = [&](std::size_t i, double delta) {
      Tensor z = logits;
      z[i] += delta;
      return loss_and_grad(kind, z, t).loss;
    };
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double numeric = (-shifted(i, 2 * eps) + 8 * shifted(i, eps) - 8 * shifted(i, -eps) +
                              shifted(i, -2 * eps)) /
                             (12 * eps);
      CHECK(testing::relative_error(r.grad[i], numeric) < 1e-6);
    }
  }
}

TEST_CASE("loss rejects empty batches and bad targets") {
  std::vector<std::int32_t> none;
  CHECK_THROWS_AS(loss_and_grad(LossKind::SoftmaxCrossEntropy, Tensor(), none), DataError);
  std::vector<std::int32_t> bad = {4};
  CHECK_THROWS_AS(loss_and_grad(LossKind::SoftmaxCrossEntropy, Tensor({1, 4}), bad), DataError);
}

TEST_CASE("softmax rows are distributions") {
  Rng rng(8);
  Tensor logits({16, 33});
  for (double& v : logits.values()) v = rng.normal(0, 10);
  Tensor p = softmax(logits);
  for (std::size_t r = 0; r < 16; ++r) {
    double sum = 0;
    for (double v : p.row(r)) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("sgd_step arithmetic") {
  ParameterSet p;
  p.add("w", Tensor({1}, {1.0}));
  GradientSet g;
  g.add("w", Tensor({1}, {0.5}));
  CHECK(sgd_step(p, g, 0.1).at("w")[0] == doctest::Approx(0.95).epsilon(1e-15));
  CHECK(sgd_step(p, g, 0.0) == p);
  CHECK(sgd_step(p, g.zeros_like(), 0.3) == p);
  GradientSet wrong;
  wrong.add("w", Tensor({2}));
  CHECK_THROWS_AS(sgd_step(p, wrong, 0.1), ConfigError);
  CHECK_THROWS_AS(sgd_step(p, g, -1.0), ConfigError);
}

TEST_CASE("finite differences: exact slope on a linear model, zero on a constant surface") {
  Network net({Embedding{"x", 1, 1}, MeanPoolOverSequence{}, FullyConnected{1, 2}});
  ParameterSet p;
  p.add("00.embedding.weight", Tensor({1, 1}, {0.75}));
  p.add("02.fc.weight", Tensor({2, 1}, {0.0, 0.0}));
  p.add("02.fc.bias", Tensor({2}, {0.0, 0.0}));
  Batch b;
  b.rows = 1;
  b.sequences.emplace("x", IndexField{1, {0}, {1}});
  b.targets = {0};
  // L = logsumexp(z) - z0; with z = 0 the slope in w0 is (0.5 - 1) * 0.75.
  auto fd = finite_difference_gradient(net, p, b, LossKind::SoftmaxCrossEntropy, 1e-5);
  CHECK(fd.at("02.fc.weight")[0] == doctest::Approx(-0.375).epsilon(1e-10));
  // Embedding value does not change the loss while both weights are zero.
  CHECK(std::abs(fd.at("00.embedding.weight")[0]) < 1e-12);
  CHECK_THROWS_AS(finite_difference_gradient(net, p, b, LossKind::SoftmaxCrossEntropy, 0.0), ArgumentError);
}

TEST_CASE("forward, backward and sgd are deterministic") {
  auto built = models::build_ranker({13, 17, 5, 4, 6, 3, {8}, 10, true, models::NormKind::GroupNorm, 4}, 21);
  Network net(built.spec);
  Rng r1(4);
  Rng r2(4);
  auto b1 = testing::random_rating_batch(r1, 7, {13, 17, 5, 4, 6, 3, {8}, 10, true});
  auto b2 = testing::random_rating_batch(r2, 7, {13, 17, 5, 4, 6, 3, {8}, 10, true});
  auto g1 = compute_gradients(net, built.params, b1, LossKind::SumOfBoth);
  auto g2 = compute_gradients(net, built.params, b2, LossKind::SumOfBoth);
  CHECK(g1.loss == g2.loss);
  CHECK(g1.grads == g2.grads);
  CHECK(sgd_step(built.params, g1.grads, 0.1) == sgd_step(built.params, g2.grads, 0.1));
}

TEST_CASE("parameter file round-trips at float32 precision") {
  auto built = models::build_ranker({13, 17, 5, 4, 6, 3, {8}, 10, true, models::NormKind::GroupNorm, 4}, 2);
  auto bytes = encode_parameters(built.params);
  CHECK(bytes[0] == 'F');
  CHECK(bytes[3] == '1');
  auto back = decode_parameters(bytes);
  CHECK(back == round_to_float32(built.params));
  CHECK(encode_parameters(back) == bytes);
  bytes.pop_back();
  CHECK_THROWS_AS(decode_parameters(bytes), DecodingError);
}

TEST_CASE("bulk normal fill has the requested moments") {
  fedq::Rng rng(77);
  std::vector<double> v(200'001);
  rng.fill_normal(v, 0.5);
  double mean = 0.0, sq = 0.0, fourth = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) {
    sq += (x - mean) * (x - mean);
    fourth += std::pow(x - mean, 4);
  }
  const double var = sq / static_cast<double>(v.size());
  // Standard errors: mean 0.5/sqrt(n) ~ 0.0011, variance ~ 0.25 * sqrt(2/n) ~ 0.0008.
  CHECK(std::abs(mean) < 0.006);
  CHECK(std::abs(var - 0.25) < 0.004);
  CHECK(fourth / static_cast<double>(v.size()) / (var * var) == doctest::Approx(3.0).epsilon(0.03));
  CHECK(v.back() != 0.0);
  std::vector<double> again(v.size());
  fedq::Rng(77).fill_normal(again, 0.5);
  CHECK(again == v);
}
