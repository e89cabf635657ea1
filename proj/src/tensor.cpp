#include "f2scil/tensor.hpp"

#include <cmath>
#include <numeric>

#include "f2scil/error.hpp"

namespace f2scil {

std::size_t shape_numel(const Tensor::Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Tensor::Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  require(shape_numel(shape_) == data_.size(),
          "tensor data length " + std::to_string(data_.size()) + " does not match shape " +
              shape_string(shape_));
}

Tensor Tensor::vector(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
  return Tensor({rows, cols}, std::move(data));
}

double Tensor::item() const {
  require(data_.size() == 1, "item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
  require(shape_.size() == 2 && begin <= end && end <= shape_[0], "slice_rows out of range");
  const std::size_t c = shape_[1];
  return Tensor({end - begin, c},
                std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                    data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> idx) const {
  require(shape_.size() == 2, "gather_rows needs a matrix");
  const std::size_t c = shape_[1];
  Tensor out({idx.size(), c});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] < shape_[0], "gather_rows index out of range");
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(idx[i] * c), c,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return out;
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  require(a.rank() == 2 && b.rank() == 2 && a.cols() == b.cols(), "concat_rows column mismatch");
  std::vector<double> d(a.storage());
  d.insert(d.end(), b.storage().begin(), b.storage().end());
  return Tensor({a.rows() + b.rows(), a.cols()}, std::move(d));
}

Tensor one_hot(std::span<const int> labels, std::size_t classes) {
  Tensor out({labels.size(), classes});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] >= 0 && static_cast<std::size_t>(labels[i]) < classes,
            "one_hot label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(classes) + ")");
    out.at(i, static_cast<std::size_t>(labels[i])) = 1.0;
  }
  return out;
}

}  // namespace f2scil
