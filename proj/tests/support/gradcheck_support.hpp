#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "fedq/nn/network.hpp"
#include "fedq/nn/training.hpp"

namespace fedq::testing {

// Relative error with an absolute floor so that near-zero gradients compare
// against round-off of the loss rather than against zero.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::size_t kink_skipped = 0;  // probes whose +-eps crossed a ReLU kink
};

// Compares backward against central finite differences for every scalar
// parameter. A parameter whose probes change the ReLU activation pattern is
// not differentiable at that resolution and is skipped (and counted).
inline GradCheckReport check_gradients(const nn::Network& net, const nn::ParameterSet& params,
                                       const nn::Batch& batch, nn::LossKind loss, double eps = 1e-5) {
  GradCheckReport report;
  const auto analytic = nn::compute_gradients(net, params, batch, loss, nn::Mode::Train).grads;
  const auto base_pattern = net.forward(params, batch, nn::Mode::Train).cache.relu_pattern();
  nn::ParameterSet probe = params;
  for (std::size_t i = 0; i < probe.size(); ++i) {
    auto w = probe.entry(i).tensor.values();
    auto a = analytic.entry(i).tensor.values();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double saved = w[k];
      w[k] = saved + eps;
      auto up = net.forward(probe, batch, nn::Mode::Train);
      const double l_up = nn::loss_and_grad(loss, up.logits, batch.targets).loss;
      const bool kink_up = up.cache.relu_pattern() != base_pattern;
      w[k] = saved - eps;
      auto down = net.forward(probe, batch, nn::Mode::Train);
      const double l_down = nn::loss_and_grad(loss, down.logits, batch.targets).loss;
      const bool kink_down = down.cache.relu_pattern() != base_pattern;
      w[k] = saved;
      if (kink_up || kink_down) {
        ++report.kink_skipped;
        continue;
      }
      const double numeric = (l_up - l_down) / (2 * eps);
      report.max_relative_error = std::max(report.max_relative_error, relative_error(a[k], numeric));
      ++report.checked;
    }
  }
  return report;
}

}  // namespace fedq::testing
