#include "f2scil/parameter.hpp"

#include "f2scil/error.hpp"

namespace f2scil {

std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::backbone: return "backbone";
    case ParamGroup::head_old: return "head_old";
    case ParamGroup::head_new: return "head_new";
    case ParamGroup::bn_stats: return "bn_stats";
  }
  return "?";
}

ParamGroup parse_param_group(std::string_view s) {
  if (s == "backbone") return ParamGroup::backbone;
  if (s == "head_old") return ParamGroup::head_old;
  if (s == "head_new") return ParamGroup::head_new;
  if (s == "bn_stats") return ParamGroup::bn_stats;
  throw ContractViolation("unknown parameter group '" + std::string(s) + "'");
}

void zero_grads(std::vector<Parameter>& params) {
  for (auto& p : params) p.grad.reset();
}

}  // namespace f2scil
