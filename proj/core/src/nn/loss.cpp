#include "fedq/nn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "fedq/error.hpp"

namespace fedq::nn {

LossKind parse_loss_kind(const std::string& name) {
  if (name == "cross_entropy") return LossKind::SoftmaxCrossEntropy;
  if (name == "mse") return LossKind::MeanSquaredError;
  if (name == "cross_entropy+mse") return LossKind::SumOfBoth;
  throw ConfigError("unknown loss '" + name + "' (expected cross_entropy, mse or cross_entropy+mse)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::SoftmaxCrossEntropy: return "cross_entropy";
    case LossKind::MeanSquaredError: return "mse";
    case LossKind::SumOfBoth: return "cross_entropy+mse";
  }
  return "?";
}

Tensor softmax(const Tensor& logits) {
  Tensor out(logits.shape());
  const std::size_t rows = logits.dim(0);
  const std::size_t k = logits.size() / rows;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* z = logits.data() + r * k;
    double* p = out.data() + r * k;
    const double mx = *std::max_element(z, z + k);
    double sum = 0;
    for (std::size_t i = 0; i < k; ++i) {
      p[i] = std::exp(z[i] - mx);
      sum += p[i];
    }
    for (std::size_t i = 0; i < k; ++i) p[i] /= sum;
  }
  return out;
}

LossResult loss_and_grad(LossKind kind, const Tensor& logits, std::span<const std::int32_t> targets) {
  if (logits.rank() != 2 || logits.dim(0) == 0) throw DataError("loss: empty batch");
  const std::size_t rows = logits.dim(0);
  const std::size_t k = logits.dim(1);
  if (targets.size() != rows) {
    throw DataError("loss: " + std::to_string(targets.size()) + " targets for " +
                    std::to_string(rows) + " rows");
  }
  const bool use_ce = kind != LossKind::MeanSquaredError;
  const bool use_mse = kind != LossKind::SoftmaxCrossEntropy;
  const double inv_rows = 1.0 / static_cast<double>(rows);

  LossResult out;
  out.grad = Tensor(logits.shape());
  const Tensor probs = softmax(logits);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::int32_t t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= k) {
      throw DataError("loss: target class " + std::to_string(t) + " outside [0, " +
                      std::to_string(k) + ")");
    }
    const double* z = logits.data() + r * k;
    const double* p = probs.data() + r * k;
    double* g = out.grad.data() + r * k;
    if (use_ce) {
      const double mx = *std::max_element(z, z + k);
      double sum = 0;
      for (std::size_t i = 0; i < k; ++i) sum += std::exp(z[i] - mx);
      out.loss += (mx + std::log(sum) - z[t]) * inv_rows;
      for (std::size_t i = 0; i < k; ++i) g[i] += p[i] * inv_rows;
      g[t] -= inv_rows;
    }
    if (use_mse) {
      double expected = 0;
      for (std::size_t i = 0; i < k; ++i) expected += p[i] * class_rating(static_cast<std::int64_t>(i));
      const double err = expected - class_rating(t);
      out.loss += err * err * inv_rows;
      // d expected / d z_j = p_j (r_j - expected)
      for (std::size_t i = 0; i < k; ++i) {
        g[i] += 2.0 * err * p[i] * (class_rating(static_cast<std::int64_t>(i)) - expected) * inv_rows;
      }
    }
  }
  return out;
}

}  // namespace fedq::nn
