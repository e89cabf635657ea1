#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "f2scil/generator_lab.hpp"
#include "f2scil/models.hpp"

namespace f2scil {

using ParamBlocks = std::map<std::string, Tensor>;

/// a_m^i: accuracy of client m's model on synthetic samples of class i.
struct AccuracyMatrix {
  Tensor values;                     // (M, c), entries in [0, 1]
  std::vector<std::size_t> clients;  // row ids
  ColumnRange classes;               // column ids

  std::size_t client_count() const { return values.rows(); }
  std::size_t class_count() const { return values.cols(); }
};

enum class CswaMode { normalized, paper_exact };

/// N_m / N per client; uniform 1/M when every count is zero.
std::vector<double> count_weights(std::span<const std::size_t> counts);

/// Count-weighted mean of every parameter outside the head_new group,
/// batch norm running statistics included.
ParamBlocks aggregate_old(std::span<const Classifier* const> locals, std::span<const std::size_t> counts);

/// Per-class fraction of the pool's samples (by condition label) whose
/// full-head argmax is that class. Every class in `classes` must occur.
std::vector<double> eval_class_accuracy(const Classifier& model, const SyntheticSet& pool, ColumnRange classes);

AccuracyMatrix accuracy_matrix(std::span<const Classifier* const> locals, const SyntheticSet& pool,
                               ColumnRange classes);

/// (M, c) weights applied to each client's columns. Normalized mode divides
/// by the column sum; columns whose accuracies sum to 0 fall back to 1/M.
Tensor cswa_weights(const AccuracyMatrix& acc, CswaMode mode);

/// Σ_m block_m with column i scaled by weights(m, i). Works for (L, c)
/// weight blocks and (c) bias vectors alike.
Tensor cswa_aggregate_new(std::span<const Tensor> blocks, const Tensor& weights);

/// Copies `layout` and overwrites every parameter from `blocks`, which must
/// name each of the layout's parameters exactly once with matching shapes.
Classifier assemble_global(const Classifier& layout, const ParamBlocks& blocks);

/// Count-weighted mean over every parameter tensor.
Classifier fedavg_full(std::span<const Classifier* const> locals, std::span<const std::size_t> counts);

}  // namespace f2scil
