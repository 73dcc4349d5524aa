#pragma once

#include "fedq/nn/batch.hpp"
#include "fedq/nn/loss.hpp"
#include "fedq/nn/network.hpp"
#include "fedq/nn/tensor.hpp"

namespace fedq::nn {

struct LossAndGradients {
  double loss = 0.0;
  GradientSet grads;
};

// Forward, loss and backward on one batch (targets taken from the batch).
LossAndGradients compute_gradients(const Network& net, const ParameterSet& params, const Batch& batch,
                                   LossKind loss, Mode mode = Mode::Train,
                                   ParameterSet* buffers = nullptr);

// Mean loss of one forward pass; no buffers are touched.
double evaluate_loss(const Network& net, const ParameterSet& params, const Batch& batch, LossKind loss,
                     Mode mode = Mode::Train);

// Returns params - eta * grads. Throws ConfigError on incongruent sets or a
// negative eta.
ParameterSet sgd_step(const ParameterSet& params, const GradientSet& grads, double eta);
void sgd_step_inplace(ParameterSet& params, const GradientSet& grads, double eta);

// Central differences (L(w + eps) - L(w - eps)) / (2 eps) for every scalar
// parameter, as a test oracle for Network::backward.
GradientSet finite_difference_gradient(const Network& net, const ParameterSet& params, const Batch& batch,
                                       LossKind loss, double epsilon, Mode mode = Mode::Train);

}  // namespace fedq::nn
