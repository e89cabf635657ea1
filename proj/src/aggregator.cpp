#include "f2scil/aggregator.hpp"

#include <algorithm>

#include "f2scil/error.hpp"

namespace f2scil {
namespace {

void check_aligned(std::span<const Classifier* const> locals, std::span<const std::size_t> counts) {
  require(!locals.empty(), "aggregation needs at least one client");
  require(locals.size() == counts.size(), "one sample count per client required");
  const auto& ref = locals.front()->parameters();
  for (const Classifier* m : locals) {
    const auto& ps = m->parameters();
    require(ps.size() == ref.size(), "client models disagree on parameter count");
    for (std::size_t i = 0; i < ps.size(); ++i)
      require(ps[i].name == ref[i].name && ps[i].value.shape() == ref[i].value.shape(),
              "client models disagree on parameter " + ref[i].name);
  }
}

ParamBlocks weighted_mean(std::span<const Classifier* const> locals, std::span<const double> w, bool skip_new) {
  ParamBlocks out;
  const auto& ref = locals.front()->parameters();
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (skip_new && ref[i].group == ParamGroup::head_new) continue;
    Tensor acc = Tensor::zeros_like(ref[i].value);
    for (std::size_t m = 0; m < locals.size(); ++m) {
      const Tensor& v = locals[m]->parameters()[i].value;
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += w[m] * v[j];
    }
    out.emplace(ref[i].name, std::move(acc));
  }
  return out;
}

}  // namespace

std::vector<double> count_weights(std::span<const std::size_t> counts) {
  require(!counts.empty(), "count_weights needs at least one client");
  double total = 0.0;
  for (auto c : counts) total += static_cast<double>(c);
  std::vector<double> w(counts.size(), 1.0 / static_cast<double>(counts.size()));
  if (total > 0.0)
    for (std::size_t m = 0; m < counts.size(); ++m) w[m] = static_cast<double>(counts[m]) / total;
  return w;
}

ParamBlocks aggregate_old(std::span<const Classifier* const> locals, std::span<const std::size_t> counts) {
  check_aligned(locals, counts);
  const auto w = count_weights(counts);
  return weighted_mean(locals, w, true);
}

std::vector<double> eval_class_accuracy(const Classifier& model, const SyntheticSet& pool, ColumnRange classes) {
  const std::size_t c = classes.width();
  std::vector<double> hits(c, 0.0), seen(c, 0.0);
  const auto pred = model.predict_labels(pool.samples);
  for (std::size_t r = 0; r < pool.size(); ++r) {
    const int y = pool.condition_labels[r];
    if (y < static_cast<int>(classes.begin) || y >= static_cast<int>(classes.end)) continue;
    const std::size_t i = static_cast<std::size_t>(y) - classes.begin;
    seen[i] += 1.0;
    if (pred[r] == y) hits[i] += 1.0;
  }
  for (std::size_t i = 0; i < c; ++i) {
    require(seen[i] > 0.0, "no synthetic samples for class " + std::to_string(classes.begin + i));
    hits[i] /= seen[i];
  }
  return hits;
}

AccuracyMatrix accuracy_matrix(std::span<const Classifier* const> locals, const SyntheticSet& pool,
                               ColumnRange classes) {
  AccuracyMatrix a{Tensor({locals.size(), classes.width()}), {}, classes};
  std::vector<std::vector<double>> rows(locals.size());
  const auto n = static_cast<std::ptrdiff_t>(locals.size());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t m = 0; m < n; ++m) rows[m] = eval_class_accuracy(*locals[m], pool, classes);
  for (std::size_t m = 0; m < locals.size(); ++m) {
    a.clients.push_back(m);
    std::copy(rows[m].begin(), rows[m].end(), a.values.row(m).begin());
  }
  return a;
}

Tensor cswa_weights(const AccuracyMatrix& acc, CswaMode mode) {
  const std::size_t M = acc.client_count(), c = acc.class_count();
  require(M > 0 && c > 0, "accuracy matrix is empty");
  for (double v : acc.values.data()) require(v >= 0.0 && v <= 1.0, "accuracies must lie in [0, 1]");
  Tensor w = acc.values;
  for (std::size_t i = 0; i < c; ++i) {
    double s = 0.0;
    for (std::size_t m = 0; m < M; ++m) s += acc.values.at(m, i);
    for (std::size_t m = 0; m < M; ++m) {
      if (s == 0.0)
        w.at(m, i) = 1.0 / static_cast<double>(M);
      else if (mode == CswaMode::normalized)
        w.at(m, i) = acc.values.at(m, i) / s;
    }
  }
  return w;
}

Tensor cswa_aggregate_new(std::span<const Tensor> blocks, const Tensor& weights) {
  require(!blocks.empty(), "CSWA needs at least one block");
  require(weights.rank() == 2 && weights.rows() == blocks.size(), "CSWA weights need one row per client");
  const Tensor& ref = blocks.front();
  const std::size_t rows = ref.rows(), cols = ref.cols();
  require(weights.cols() == cols, "CSWA weights need one column per class");
  Tensor out = Tensor::zeros_like(ref);
  for (std::size_t m = 0; m < blocks.size(); ++m) {
    require(blocks[m].shape() == ref.shape(), "CSWA blocks differ in shape");
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t i = 0; i < cols; ++i) out[r * cols + i] += weights.at(m, i) * blocks[m][r * cols + i];
  }
  return out;
}

Classifier assemble_global(const Classifier& layout, const ParamBlocks& blocks) {
  Classifier out = layout;
  require(blocks.size() == out.parameters().size(),
          "assemble_global got " + std::to_string(blocks.size()) + " blocks for " +
              std::to_string(out.parameters().size()) + " parameters");
  for (auto& p : out.parameters()) {
    auto it = blocks.find(p.name);
    require(it != blocks.end(), "assemble_global is missing parameter " + p.name);
    require(it->second.shape() == p.value.shape(), "assemble_global shape mismatch for " + p.name);
    p.value = it->second;
    p.grad.reset();
  }
  return out;
}

Classifier fedavg_full(std::span<const Classifier* const> locals, std::span<const std::size_t> counts) {
  check_aligned(locals, counts);
  const auto w = count_weights(counts);
  return assemble_global(*locals.front(), weighted_mean(locals, w, false));
}

}  // namespace f2scil
