#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "f2scil/tensor.hpp"

namespace f2scil {

/// Which block of the model a tensor belongs to. head_old / head_new is the
/// inherited-versus-added split of the classifier head; bn_stats holds batch
/// norm running statistics, which are never touched by an optimizer.
enum class ParamGroup { backbone, head_old, head_new, bn_stats };

std::string_view to_string(ParamGroup g);
ParamGroup parse_param_group(std::string_view s);

struct Parameter {
  std::string name;
  Tensor value;
  std::optional<Tensor> grad;
  ParamGroup group = ParamGroup::backbone;

  bool trainable() const { return group != ParamGroup::bn_stats; }
};

void zero_grads(std::vector<Parameter>& params);

}  // namespace f2scil
