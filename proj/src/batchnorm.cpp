#include "f2scil/batchnorm.hpp"

#include "f2scil/error.hpp"
#include "f2scil/kernels.hpp"

namespace f2scil {

BatchNormState BatchNormState::fresh(std::size_t channels, double momentum, double epsilon) {
  return BatchNormState{Tensor({channels}, 0.0), Tensor({channels}, 1.0), momentum, epsilon};
}

void fold_running_stats(Tensor& running_mean, Tensor& running_var, const Tensor& batch_mean,
                        const Tensor& batch_var, double momentum) {
  require(running_mean.size() == batch_mean.size() && running_var.size() == batch_var.size(),
          "running statistic length mismatch");
  for (std::size_t c = 0; c < running_mean.size(); ++c) {
    running_mean[c] = (1.0 - momentum) * running_mean[c] + momentum * batch_mean[c];
    running_var[c] = (1.0 - momentum) * running_var[c] + momentum * batch_var[c];
  }
}

BatchNormOutput batchnorm_forward(Var x, Var gamma, Var beta, BatchNormState& state, BnMode mode,
                                  bool update_running) {
  require(state.running_mean.size() == x.value().cols() && state.running_var.size() == x.value().cols(),
          "batchnorm state has " + std::to_string(state.running_mean.size()) + " channels, input has " +
              std::to_string(x.value().cols()));
  if (mode == BnMode::train) {
    auto r = ad::batch_norm_train(x, gamma, beta, state.epsilon);
    if (update_running) fold_running_stats(state.running_mean, state.running_var, r.batch_mean, r.batch_var,
                                           state.momentum);
    return {r.y, std::move(r.batch_mean), std::move(r.batch_var)};
  }
  Tensor mu({x.value().cols()}), var({x.value().cols()});
  if (x.value().rows() > 0) kernels::column_moments(x.value(), mu.data(), var.data());
  Var y = ad::batch_norm_eval(x, gamma, beta, state.running_mean, state.running_var, state.epsilon);
  return {y, std::move(mu), std::move(var)};
}

}  // namespace f2scil
