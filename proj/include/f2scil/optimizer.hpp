#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "f2scil/parameter.hpp"

namespace f2scil {

enum class OptimizerKind { sgd_momentum, adam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::sgd_momentum;
  /// Learning rate per trainable group. A group present in the stepped
  /// parameters but missing here is a contract violation.
  std::map<ParamGroup, double> rates;
  double momentum = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static OptimizerConfig sgd(double lr, double momentum = 0.0);
  static OptimizerConfig adam(double lr);
  /// Same rate for every trainable group.
  OptimizerConfig& all_groups(double lr);
};

/// Stateful first-order optimizer. Momentum / moment buffers are keyed by
/// parameter name, so one Optimizer follows one model.
class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg) : cfg_(std::move(cfg)) {}

  /// Updates every trainable parameter from its grad. bn_stats parameters
  /// are skipped. Groups whose rate is 0 are left bit-identical.
  void step(std::span<Parameter> params);
  /// Multiplies every group's rate by factor (step decay schedules).
  void scale_rates(double factor);

  const OptimizerConfig& config() const { return cfg_; }

 private:
  struct Slot {
    std::vector<double> m;
    std::vector<double> v;
    long steps = 0;
  };
  OptimizerConfig cfg_;
  std::map<std::string, Slot> slots_;
};

}  // namespace f2scil
