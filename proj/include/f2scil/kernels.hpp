#pragma once

#include <span>

#include "f2scil/tensor.hpp"

// Dense kernels behind the autodiff engine. Each kernel comes in an OpenMP
// version (f2scil::kernels) and a serial reference (f2scil::kernels::reference).
// Both visit the reduction index in the same order, so results are
// bit-identical regardless of thread count.
namespace f2scil::kernels {

/// c (+)= a * b, with a (m,k), b (k,n), c (m,n).
void gemm(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
/// c (+)= aᵀ * b, with a (m,p), b (m,n), c (p,n).
void gemm_at_b(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
/// c (+)= a * bᵀ, with a (m,k), b (n,k), c (m,n).
void gemm_a_bt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);

/// Row-wise softmax with max subtraction.
void softmax_rows(const Tensor& x, Tensor& y);
/// Per-column mean and biased variance of a (rows, cols) matrix.
void column_moments(const Tensor& x, std::span<double> mean, std::span<double> var);

namespace reference {
void gemm(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
void gemm_at_b(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
void gemm_a_bt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate = false);
void softmax_rows(const Tensor& x, Tensor& y);
void column_moments(const Tensor& x, std::span<double> mean, std::span<double> var);
}  // namespace reference

/// Threads OpenMP would use for a parallel region here (1 without OpenMP).
int max_threads();

}  // namespace f2scil::kernels
