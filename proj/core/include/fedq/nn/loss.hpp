#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "fedq/nn/tensor.hpp"

namespace fedq::nn {

enum class LossKind { SoftmaxCrossEntropy, MeanSquaredError, SumOfBoth };

LossKind parse_loss_kind(const std::string& name);
std::string to_string(LossKind kind);

struct LossResult {
  double loss = 0.0;
  Tensor grad;  // d loss / d logits, same shape as logits
};

// Rating represented by class index i: 0.5 + 0.5 i.
inline double class_rating(std::int64_t cls) { return 0.5 + 0.5 * static_cast<double>(cls); }

// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

// Mean loss over the batch rows.
//  - SoftmaxCrossEntropy: -log softmax(z)[t].
//  - MeanSquaredError: (sum_i p_i r_i - r_t)^2 where r_i = class_rating(i),
//    i.e. the squared error of the probability-weighted expected rating.
//  - SumOfBoth: the sum of the two.
// Targets are class indices. Throws DataError on an empty batch or a target
// outside [0, classes).
LossResult loss_and_grad(LossKind kind, const Tensor& logits, std::span<const std::int32_t> targets);

}  // namespace fedq::nn
