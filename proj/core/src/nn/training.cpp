#include "fedq/nn/training.hpp"

#include "fedq/error.hpp"

namespace fedq::nn {

LossAndGradients compute_gradients(const Network& net, const ParameterSet& params, const Batch& batch,
                                   LossKind loss, Mode mode, ParameterSet* buffers) {
  ForwardResult fwd = net.forward(params, batch, mode, buffers);
  LossResult lr = loss_and_grad(loss, fwd.logits, batch.targets);
  return {lr.loss, net.backward(params, fwd.cache, lr.grad)};
}

double evaluate_loss(const Network& net, const ParameterSet& params, const Batch& batch, LossKind loss,
                     Mode mode) {
  ForwardResult fwd = net.forward(params, batch, mode, nullptr);
  return loss_and_grad(loss, fwd.logits, batch.targets).loss;
}

void sgd_step_inplace(ParameterSet& params, const GradientSet& grads, double eta) {
  if (!(eta >= 0)) throw ConfigError("sgd_step: learning rate must be >= 0");
  require_congruent(params, grads, "sgd_step");
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params.entry(i).tensor.values();
    auto g = grads.entry(i).tensor.values();
    for (std::size_t k = 0; k < w.size(); ++k) w[k] -= eta * g[k];
  }
}

ParameterSet sgd_step(const ParameterSet& params, const GradientSet& grads, double eta) {
  ParameterSet out = params;
  sgd_step_inplace(out, grads, eta);
  return out;
}

GradientSet finite_difference_gradient(const Network& net, const ParameterSet& params, const Batch& batch,
                                       LossKind loss, double epsilon, Mode mode) {
  if (!(epsilon > 0)) throw ArgumentError("finite_difference_gradient: epsilon must be positive");
  GradientSet out = params.zeros_like();
  ParameterSet probe = params;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    auto w = probe.entry(i).tensor.values();
    auto g = out.entry(i).tensor.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double saved = w[k];
      w[k] = saved + epsilon;
      const double up = evaluate_loss(net, probe, batch, loss, mode);
      w[k] = saved - epsilon;
      const double down = evaluate_loss(net, probe, batch, loss, mode);
      w[k] = saved;
      g[k] = (up - down) / (2.0 * epsilon);
    }
  }
  return out;
}

}  // namespace fedq::nn
