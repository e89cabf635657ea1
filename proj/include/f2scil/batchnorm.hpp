#pragma once

#include "f2scil/autodiff.hpp"

namespace f2scil {

enum class BnMode { train, eval };

struct BatchNormState {
  Tensor running_mean;  // per channel
  Tensor running_var;   // per channel, > 0
  double momentum = 0.1;
  double epsilon = 1e-5;

  static BatchNormState fresh(std::size_t channels, double momentum = 0.1, double epsilon = 1e-5);
};

struct BatchNormOutput {
  Var y;
  Tensor batch_mean;
  Tensor batch_var;  // biased
};

/// Train mode normalizes by batch statistics and (when update_running) folds
/// them into the running statistics with an exponential moving average:
/// running = (1 - momentum) * running + momentum * batch. Eval mode
/// normalizes by the running statistics; batch moments are still reported.
BatchNormOutput batchnorm_forward(Var x, Var gamma, Var beta, BatchNormState& state, BnMode mode,
                                  bool update_running = true);

void fold_running_stats(Tensor& running_mean, Tensor& running_var, const Tensor& batch_mean,
                        const Tensor& batch_var, double momentum);

}  // namespace f2scil

namespace f2scil {

/// Differentiable batch moments of the activations entering one batch norm
/// layer, next to that layer's stored running statistics.
struct BnLayerStats {
  Var batch_mean;
  Var batch_var;
  Tensor running_mean;
  Tensor running_var;
};

}  // namespace f2scil
