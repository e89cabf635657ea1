#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "f2scil/parameter.hpp"
#include "f2scil/tensor.hpp"

namespace f2scil {

class Graph;

/// Handle to a node of a recorded computation. Cheap to copy; only valid
/// while its Graph is alive.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Tensor::Shape& shape() const { return value().shape(); }
  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}
  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so walking the
/// tape backwards is a valid topological order. A Graph and its Vars belong
/// to a single thread.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::size_t)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  Var variable(Tensor value);
  /// Leaf holding a copy of p.value; backward() gradients can be pushed into
  /// p.grad with accumulate_parameter_grads().
  Var parameter(Parameter& p);

  const Tensor& value(Var v) const { return nodes_[v.id_].value; }
  /// Gradient of the last backward() seed w.r.t. v; zeros if v is unreached.
  Tensor grad(Var v) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  /// Backpropagates from a scalar node. Throws ContractViolation otherwise.
  void backward(Var loss);
  /// Adds every bound parameter's gradient into Parameter::grad (creating it
  /// when absent). Parameters that were bound but unreached receive zeros.
  void accumulate_parameter_grads();

  /// Sum of the gradients of every node bound to p by parameter().
  Tensor bound_grad(const Parameter& p) const;

  std::size_t size() const { return nodes_.size(); }

  // Op-author interface.
  Var record(Tensor value, std::vector<Var> inputs, BackwardFn fn);
  const Tensor& out_grad(std::size_t id) const { return nodes_[id].grad; }
  Tensor& grad_ref(std::size_t id);
  std::size_t input(std::size_t id, std::size_t k) const { return nodes_[id].inputs[k]; }
  const Tensor& value_at(std::size_t id) const { return nodes_[id].value; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool has_grad = false;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
  };
  std::vector<Node> nodes_;
};

/// ∂loss/∂p for each of params that was bound into loss's graph. Parameters
/// the loss does not depend on get zero gradients; the parameters themselves
/// are not modified.
std::map<std::string, Tensor> grad(Var loss, std::span<Parameter* const> params);

namespace ad {

// Every op records a node; shapes are checked eagerly and violations throw
// ContractViolation. Vectors are rank-1, batches are (rows, cols).

Var matmul(Var a, Var b);
Var add_row(Var x, Var v);  // x (b,n) + v (n) broadcast over rows
Var mul_row(Var x, Var v);  // x (b,n) * v (n) broadcast over rows
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var x, double s);
Var neg(Var x);
Var relu(Var x);
Var tanh(Var x);
Var softmax(Var x);      // row-wise
Var log_softmax(Var x);  // row-wise
Var log(Var x);          // clamped: log(max(x, kLogFloor))
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var x, std::size_t begin, std::size_t end);
Var concat_rows(Var a, Var b);
Var slice_rows(Var x, std::size_t begin, std::size_t end);
Var sum(Var x);      // scalar
Var mean(Var x);     // scalar
Var row_sum(Var x);  // (b,n) -> (b)
Var column_mean(Var x);  // (b,n) -> (n)
Var column_var(Var x);   // (b,n) -> (n), biased
Var l2_norm(Var x);      // scalar Euclidean norm over all entries

struct BatchNormTrainResult {
  Var y;
  Tensor batch_mean;
  Tensor batch_var;
};

/// Normalizes with the batch's own statistics, then applies gamma/beta.
/// Throws DegenerateBatchError for a single-row batch.
BatchNormTrainResult batch_norm_train(Var x, Var gamma, Var beta, double eps);
/// Normalizes with fixed running statistics, then applies gamma/beta.
Var batch_norm_eval(Var x, Var gamma, Var beta, const Tensor& running_mean, const Tensor& running_var,
                    double eps);

inline constexpr double kLogFloor = 1e-12;

}  // namespace ad
}  // namespace f2scil
