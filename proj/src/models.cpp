#include "f2scil/models.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "f2scil/error.hpp"
#include "f2scil/rng.hpp"

namespace f2scil {
namespace {

std::size_t push_param(std::vector<Parameter>& ps, std::string name, Tensor value, ParamGroup group) {
  for (const auto& p : ps) require(p.name != name, "duplicate parameter name " + name);
  ps.push_back(Parameter{std::move(name), std::move(value), std::nullopt, group});
  return ps.size() - 1;
}

detail::DenseBlock add_dense(std::vector<Parameter>& ps, const std::string& prefix, std::size_t in,
                             std::size_t out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  detail::DenseBlock b{};
  b.weight = push_param(ps, prefix + ".weight", uniform_tensor({in, out}, rng, -bound, bound), ParamGroup::backbone);
  b.bias = push_param(ps, prefix + ".bias", uniform_tensor({out}, rng, -bound, bound), ParamGroup::backbone);
  const std::string bn = prefix + "_bn";
  b.gamma = push_param(ps, bn + ".gamma", Tensor({out}, 1.0), ParamGroup::backbone);
  b.beta = push_param(ps, bn + ".beta", Tensor({out}, 0.0), ParamGroup::backbone);
  b.running_mean = push_param(ps, bn + ".running_mean", Tensor({out}, 0.0), ParamGroup::bn_stats);
  b.running_var = push_param(ps, bn + ".running_var", Tensor({out}, 1.0), ParamGroup::bn_stats);
  return b;
}

Var bind(Graph& g, const std::vector<Parameter>& ps, std::vector<Parameter>* mut, std::size_t i) {
  return mut ? g.parameter((*mut)[i]) : g.constant(ps[i].value);
}

Var dense_stack(Graph& g, Var h, const std::vector<Parameter>& ps, std::vector<Parameter>* mut,
                const std::vector<detail::DenseBlock>& blocks, BnMode mode, bool update, double momentum,
                double eps, std::vector<BnLayerStats>* trace) {
  for (const auto& b : blocks) {
    h = ad::add_row(ad::matmul(h, bind(g, ps, mut, b.weight)), bind(g, ps, mut, b.bias));
    if (trace)
      trace->push_back({ad::column_mean(h), ad::column_var(h), ps[b.running_mean].value, ps[b.running_var].value});
    Var gamma = bind(g, ps, mut, b.gamma);
    Var beta = bind(g, ps, mut, b.beta);
    if (mode == BnMode::train) {
      auto r = ad::batch_norm_train(h, gamma, beta, eps);
      if (update && mut)
        fold_running_stats((*mut)[b.running_mean].value, (*mut)[b.running_var].value, r.batch_mean, r.batch_var,
                           momentum);
      h = r.y;
    } else {
      h = ad::batch_norm_eval(h, gamma, beta, ps[b.running_mean].value, ps[b.running_var].value, eps);
    }
    h = ad::relu(h);
  }
  return h;
}

}  // namespace

// ---------------------------------------------------------------- Classifier

Classifier::Classifier(ClassifierShape shape, std::uint64_t seed) : shape_(std::move(shape)) {
  require(shape_.input_dim > 0 && !shape_.hidden.empty(), "classifier needs an input dim and hidden layers");
  require(shape_.base_classes > 0, "classifier needs at least one base class");
  Rng rng(seed);
  std::size_t in = shape_.input_dim;
  for (std::size_t i = 0; i < shape_.hidden.size(); ++i) {
    blocks_.push_back(add_dense(params_, "backbone.fc" + std::to_string(i), in, shape_.hidden[i], rng));
    in = shape_.hidden[i];
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  const std::size_t c = shape_.base_classes;
  HeadBlock hb{};
  hb.weight = push_param(params_, head_weight_name(0), uniform_tensor({in, c}, rng, -bound, bound),
                         ParamGroup::head_new);
  hb.bias = push_param(params_, head_bias_name(0), uniform_tensor({c}, rng, -bound, bound), ParamGroup::head_new);
  hb.cols = {0, c};
  head_.push_back(hb);
}

std::string Classifier::head_weight_name(std::size_t session) { return "head.s" + std::to_string(session) + ".weight"; }
std::string Classifier::head_bias_name(std::size_t session) { return "head.s" + std::to_string(session) + ".bias"; }

std::size_t Classifier::classes_seen() const { return head_.empty() ? 0 : head_.back().cols.end; }

ColumnRange Classifier::session_columns(std::size_t session) const {
  require(session < head_.size(), "no head columns recorded for session " + std::to_string(session));
  return head_[session].cols;
}

std::vector<ColumnRange> Classifier::session_map() const {
  std::vector<ColumnRange> out;
  for (const auto& h : head_) out.push_back(h.cols);
  return out;
}

Parameter& Classifier::parameter(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ContractViolation("classifier has no parameter " + std::string(name));
}

const Parameter& Classifier::parameter(std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw ContractViolation("classifier has no parameter " + std::string(name));
}

Var Classifier::head_forward(Var features, std::span<const Var> weights, std::span<const Var> biases) const {
  std::vector<Var> parts;
  for (std::size_t i = 0; i < weights.size(); ++i) parts.push_back(ad::add_row(ad::matmul(features, weights[i]), biases[i]));
  if (parts.size() == 1) return parts[0];
  return ad::concat_cols(parts);
}

Var Classifier::forward(Graph& g, Var x, BnMode mode, bool update_running_stats) {
  require(x.value().rank() == 2 && x.value().cols() == shape_.input_dim,
          "classifier input must be (batch, " + std::to_string(shape_.input_dim) + "), got " +
              shape_string(x.value().shape()));
  Var h = dense_stack(g, x, params_, &params_, blocks_, mode, update_running_stats, shape_.bn_momentum,
                      shape_.bn_epsilon, nullptr);
  std::vector<Var> w, b;
  for (const auto& hb : head_) {
    w.push_back(g.parameter(params_[hb.weight]));
    b.push_back(g.parameter(params_[hb.bias]));
  }
  return head_forward(h, w, b);
}

Var Classifier::forward_frozen(Graph& g, Var x, BnMode mode, std::vector<BnLayerStats>* trace) const {
  require(x.value().rank() == 2 && x.value().cols() == shape_.input_dim,
          "classifier input must be (batch, " + std::to_string(shape_.input_dim) + "), got " +
              shape_string(x.value().shape()));
  Var h = dense_stack(g, x, params_, nullptr, blocks_, mode, false, shape_.bn_momentum, shape_.bn_epsilon, trace);
  std::vector<Var> w, b;
  for (const auto& hb : head_) {
    w.push_back(g.constant(params_[hb.weight].value));
    b.push_back(g.constant(params_[hb.bias].value));
  }
  return head_forward(h, w, b);
}

Tensor Classifier::predict(const Tensor& x) const {
  Graph g;
  return forward_frozen(g, g.constant(x), BnMode::eval).value();
}

std::vector<int> Classifier::predict_labels(const Tensor& x) const {
  const Tensor logits = predict(x);
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    out[r] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

void Classifier::expand_head(std::size_t c, std::uint64_t seed) {
  if (c == 0) return;
  for (const auto& hb : head_) {
    params_[hb.weight].group = ParamGroup::head_old;
    params_[hb.bias].group = ParamGroup::head_old;
  }
  Rng rng(seed);
  const std::size_t L = feature_dim();
  const double bound = 1.0 / std::sqrt(static_cast<double>(L));
  const std::size_t t = head_.size();
  HeadBlock hb{};
  hb.weight = push_param(params_, head_weight_name(t), uniform_tensor({L, c}, rng, -bound, bound),
                         ParamGroup::head_new);
  hb.bias = push_param(params_, head_bias_name(t), uniform_tensor({c}, rng, -bound, bound), ParamGroup::head_new);
  const std::size_t start = classes_seen();
  hb.cols = {start, start + c};
  head_.push_back(hb);
}

Classifier Classifier::from_parameters(ClassifierShape shape, std::vector<std::size_t> session_widths,
                                       std::vector<Parameter> params) {
  require(!session_widths.empty(), "classifier needs at least one head session");
  shape.base_classes = session_widths.front();
  Classifier m(shape, 0);
  for (std::size_t t = 1; t < session_widths.size(); ++t) m.expand_head(session_widths[t], 0);
  require(params.size() == m.params_.size(), "parameter count does not match the classifier layout");
  for (auto& p : params) {
    Parameter& dst = m.parameter(p.name);
    require(dst.value.shape() == p.value.shape(), "shape mismatch for " + p.name);
    dst.value = std::move(p.value);
    dst.group = p.group;
    dst.grad.reset();
  }
  return m;
}

Var logits_slice(Var logits, const Classifier& model, std::size_t session) {
  const ColumnRange r = model.session_columns(session);
  require(logits.value().cols() == model.classes_seen(), "logits width does not match the classifier head");
  return ad::slice_cols(logits, r.begin, r.end);
}

// ------------------------------------------------------- ConditionalGenerator

ConditionalGenerator::ConditionalGenerator(GeneratorShape shape, std::uint64_t seed) : shape_(std::move(shape)) {
  require(shape_.class_count >= 1 && shape_.noise_dim >= 1 && shape_.output_dim >= 1,
          "generator needs classes, noise and output dimensions");
  if (shape_.lower.empty()) shape_.lower = Tensor({shape_.output_dim}, -1.0);
  if (shape_.upper.empty()) shape_.upper = Tensor({shape_.output_dim}, 1.0);
  require(shape_.lower.size() == shape_.output_dim && shape_.upper.size() == shape_.output_dim,
          "generator envelope must have output_dim entries");
  Rng rng(seed);
  std::size_t in = shape_.noise_dim + shape_.class_count;
  for (std::size_t i = 0; i < shape_.hidden.size(); ++i) {
    blocks_.push_back(add_dense(params_, "gen.fc" + std::to_string(i), in, shape_.hidden[i], rng));
    in = shape_.hidden[i];
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  out_weight_ = push_param(params_, "gen.out.weight", uniform_tensor({in, shape_.output_dim}, rng, -bound, bound),
                           ParamGroup::backbone);
  out_bias_ = push_param(params_, "gen.out.bias", uniform_tensor({shape_.output_dim}, rng, -bound, bound),
                         ParamGroup::backbone);
}

Var ConditionalGenerator::forward_impl(Graph& g, const Tensor& z, std::span<const int> labels, BnMode mode,
                                       bool update, std::vector<Parameter>* mut) const {
  require(z.rank() == 2 && z.cols() == shape_.noise_dim && z.rows() == labels.size(),
          "generator noise must be (batch, noise_dim) with one label per row");
  std::vector<int> local(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const long l = static_cast<long>(labels[i]) - static_cast<long>(shape_.class_begin);
    require(l >= 0 && l < static_cast<long>(shape_.class_count),
            "generator label " + std::to_string(labels[i]) + " outside its class range");
    local[i] = static_cast<int>(l);
  }
  const Var zin = g.constant(z);
  const Var cond = g.constant(one_hot(local, shape_.class_count));
  std::array<Var, 2> parts{zin, cond};
  Var h = ad::concat_cols(parts);
  h = dense_stack(g, h, params_, mut, blocks_, mode, update, shape_.bn_momentum, shape_.bn_epsilon, nullptr);
  h = ad::add_row(ad::matmul(h, bind(g, params_, mut, out_weight_)), bind(g, params_, mut, out_bias_));
  h = ad::tanh(h);
  Tensor half({shape_.output_dim}), mid({shape_.output_dim});
  for (std::size_t j = 0; j < shape_.output_dim; ++j) {
    half[j] = 0.5 * (shape_.upper[j] - shape_.lower[j]);
    mid[j] = 0.5 * (shape_.upper[j] + shape_.lower[j]);
  }
  return ad::add_row(ad::mul_row(h, g.constant(std::move(half))), g.constant(std::move(mid)));
}

Var ConditionalGenerator::forward(Graph& g, const Tensor& z, std::span<const int> labels, BnMode mode,
                                  bool update_running_stats) {
  return forward_impl(g, z, labels, mode, update_running_stats, &params_);
}

Tensor ConditionalGenerator::generate(const Tensor& z, std::span<const int> labels, BnMode mode) const {
  Graph g;
  return forward_impl(g, z, labels, mode, false, nullptr).value();
}

}  // namespace f2scil
