#include "f2scil/optimizer.hpp"

#include <cmath>

#include "f2scil/error.hpp"

namespace f2scil {

OptimizerConfig OptimizerConfig::sgd(double lr, double momentum) {
  OptimizerConfig c;
  c.kind = OptimizerKind::sgd_momentum;
  c.momentum = momentum;
  c.all_groups(lr);
  return c;
}

OptimizerConfig OptimizerConfig::adam(double lr) {
  OptimizerConfig c;
  c.kind = OptimizerKind::adam;
  c.all_groups(lr);
  return c;
}

OptimizerConfig& OptimizerConfig::all_groups(double lr) {
  for (auto g : {ParamGroup::backbone, ParamGroup::head_old, ParamGroup::head_new}) rates[g] = lr;
  return *this;
}

void Optimizer::scale_rates(double factor) {
  for (auto& [g, r] : cfg_.rates) r *= factor;
}

void Optimizer::step(std::span<Parameter> params) {
  for (Parameter& p : params) {
    if (!p.trainable()) continue;
    const auto rate_it = cfg_.rates.find(p.group);
    require(rate_it != cfg_.rates.end(),
            "optimizer has no learning rate for group " + std::string(to_string(p.group)) + " (" + p.name + ")");
    require(p.grad.has_value(), "optimizer step: parameter " + p.name + " has no gradient");
    require(p.grad->shape() == p.value.shape(), "optimizer step: gradient shape mismatch for " + p.name);
    const double lr = rate_it->second;
    require(lr >= 0.0, "negative learning rate for " + p.name);
    if (lr == 0.0) continue;

    auto w = p.value.data();
    auto g = p.grad->data();
    Slot& s = slots_[p.name];
    if (cfg_.kind == OptimizerKind::sgd_momentum) {
      if (cfg_.momentum == 0.0) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
        continue;
      }
      if (s.m.empty()) {
        s.m.assign(g.begin(), g.end());
      } else {
        for (std::size_t i = 0; i < w.size(); ++i) s.m[i] = cfg_.momentum * s.m[i] + g[i];
      }
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * s.m[i];
    } else {
      if (s.m.empty()) {
        s.m.assign(w.size(), 0.0);
        s.v.assign(w.size(), 0.0);
      }
      ++s.steps;
      const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.steps));
      const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.steps));
      for (std::size_t i = 0; i < w.size(); ++i) {
        s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * g[i];
        s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = s.m[i] / c1;
        const double vhat = s.v[i] / c2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
      }
    }
  }
}

}  // namespace f2scil
