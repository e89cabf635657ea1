#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "f2scil/autodiff.hpp"
#include "f2scil/batchnorm.hpp"
#include "f2scil/parameter.hpp"

namespace f2scil {

/// Half-open range of head columns owned by one session.
struct ColumnRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t width() const { return end - begin; }
  bool operator==(const ColumnRange&) const = default;
};

struct ClassifierShape {
  std::size_t input_dim = 16;
  std::vector<std::size_t> hidden = {64, 64};  // last entry is the feature dim L
  std::size_t base_classes = 12;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
};

namespace detail {
// Fully connected + batch norm + relu block; indices into the owner's
// parameter vector.
struct DenseBlock {
  std::size_t weight, bias, gamma, beta, running_mean, running_var;
};
}  // namespace detail

/// Fully connected backbone with batch norm, followed by a linear head whose
/// columns are stored as one block per session ("head.s<t>.weight" of shape
/// (L, c_t) and "head.s<t>.bias"). The newest block is tagged head_new, all
/// earlier ones head_old.
class Classifier {
 public:
  Classifier() = default;
  Classifier(ClassifierShape shape, std::uint64_t seed);

  /// Records a forward pass with parameters bound as trainable leaves. In
  /// train mode running statistics are updated when update_running_stats.
  Var forward(Graph& g, Var x, BnMode mode, bool update_running_stats = true);
  /// Forward with every parameter bound as a constant. Never mutates the
  /// model. When trace is given, the moments of each batch norm input are
  /// recorded next to the stored running statistics.
  Var forward_frozen(Graph& g, Var x, BnMode mode, std::vector<BnLayerStats>* trace = nullptr) const;
  /// Eval-mode logits, no recording kept.
  Tensor predict(const Tensor& x) const;
  std::vector<int> predict_labels(const Tensor& x) const;

  /// Appends c columns initialized from a seeded uniform draw; previous
  /// head_new blocks become head_old. c = 0 is a no-op.
  void expand_head(std::size_t c, std::uint64_t seed);

  std::size_t input_dim() const { return shape_.input_dim; }
  std::size_t feature_dim() const { return shape_.hidden.back(); }
  std::size_t classes_seen() const;
  std::size_t session_count() const { return head_.size(); }
  /// Throws ContractViolation for an unknown session.
  ColumnRange session_columns(std::size_t session) const;
  std::vector<ColumnRange> session_map() const;
  const ClassifierShape& shape() const { return shape_; }

  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }
  Parameter& parameter(std::string_view name);
  const Parameter& parameter(std::string_view name) const;
  static std::string head_weight_name(std::size_t session);
  static std::string head_bias_name(std::size_t session);

  /// Rebuilds a classifier from a parameter list and its session widths
  /// (checkpoint loading). Shapes are validated against `shape`.
  static Classifier from_parameters(ClassifierShape shape, std::vector<std::size_t> session_widths,
                                    std::vector<Parameter> params);

 private:
  struct HeadBlock {
    std::size_t weight, bias;
    ColumnRange cols;
  };

  Var head_forward(Var features, std::span<const Var> weights, std::span<const Var> biases) const;

  ClassifierShape shape_;
  std::vector<Parameter> params_;
  std::vector<detail::DenseBlock> blocks_;
  std::vector<HeadBlock> head_;
};

/// Slice of logits holding session t's columns.
Var logits_slice(Var logits, const Classifier& model, std::size_t session);

struct GeneratorShape {
  std::size_t noise_dim = 32;
  std::size_t class_begin = 0;  // first global class id this generator conditions on
  std::size_t class_count = 1;
  std::vector<std::size_t> hidden = {64, 64};
  std::size_t output_dim = 16;
  Tensor lower;  // per-dimension output envelope
  Tensor upper;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
};

/// x̃ = G(z, ỹ): the one-hot of ỹ (within the generator's class range) is
/// concatenated to z, passed through dense+BN+relu blocks, a linear layer
/// and tanh rescaled to [lower, upper] per dimension.
class ConditionalGenerator {
 public:
  ConditionalGenerator() = default;
  ConditionalGenerator(GeneratorShape shape, std::uint64_t seed);

  /// Trainable forward. labels are global class ids.
  Var forward(Graph& g, const Tensor& z, std::span<const int> labels, BnMode mode = BnMode::train,
              bool update_running_stats = true);
  /// Frozen forward, returns samples only. Throws ContractViolation for
  /// labels outside the class range.
  Tensor generate(const Tensor& z, std::span<const int> labels, BnMode mode = BnMode::train) const;

  const GeneratorShape& shape() const { return shape_; }
  std::vector<Parameter>& parameters() { return params_; }
  const std::vector<Parameter>& parameters() const { return params_; }

 private:
  Var forward_impl(Graph& g, const Tensor& z, std::span<const int> labels, BnMode mode, bool update,
                   std::vector<Parameter>* mutable_params) const;

  GeneratorShape shape_;
  std::vector<Parameter> params_;
  std::vector<detail::DenseBlock> blocks_;
  std::size_t out_weight_ = 0, out_bias_ = 0;
};

}  // namespace f2scil
