#include "f2scil/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "f2scil/error.hpp"

namespace f2scil::kernels {
namespace {

// Below this many multiply-adds the fork/join cost dominates.
constexpr long kParallelWork = 1L << 15;

void check_gemm(std::size_t m, std::size_t k1, std::size_t k2, std::size_t n, const Tensor& c) {
  require(k1 == k2, "gemm inner dimensions differ");
  require(c.rank() == 2 && c.rows() == m && c.cols() == n, "gemm output has wrong shape");
}

// Row kernels shared by the parallel and serial drivers. Each computes one
// output row with the reduction index ascending.
inline void axpy_row(const double* __restrict arow, std::size_t k, const double* __restrict b, std::size_t n,
                     double* __restrict out, bool accumulate) {
  if (!accumulate) std::fill(out, out + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = arow[p];
    const double* __restrict brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
  }
}

inline void gemm_row(const Tensor& a, const Tensor& b, Tensor& c, std::size_t i, bool accumulate) {
  const std::size_t k = a.cols(), n = b.cols();
  axpy_row(a.data().data() + i * k, k, b.data().data(), n, c.data().data() + i * n, accumulate);
}

inline void gemm_at_b_row(const Tensor& a, const Tensor& b, Tensor& c, std::size_t i, bool accumulate) {
  const std::size_t m = a.rows(), p = a.cols(), n = b.cols();
  double* __restrict out = c.data().data() + i * n;
  if (!accumulate) std::fill(out, out + n, 0.0);
  const double* ad = a.data().data();
  const double* bd = b.data().data();
  for (std::size_t r = 0; r < m; ++r) {
    const double av = ad[r * p + i];
    const double* __restrict brow = bd + r * n;
    for (std::size_t j = 0; j < n; ++j) out[j] += av * brow[j];
  }
}

// a · bᵀ runs as a · (bᵀ materialized), so the inner loop is an axpy.
Tensor transposed(const Tensor& b) {
  const std::size_t r = b.rows(), c = b.cols();
  Tensor t({c, r});
  const double* src = b.data().data();
  double* dst = t.data().data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) dst[j * r + i] = src[i * c + j];
  return t;
}

inline void softmax_row(const Tensor& x, Tensor& y, std::size_t i) {
  const auto in = x.row(i);
  auto out = y.row(i);
  const double mx = *std::max_element(in.begin(), in.end());
  double z = 0.0;
  for (std::size_t j = 0; j < in.size(); ++j) {
    out[j] = std::exp(in[j] - mx);
    z += out[j];
  }
  for (double& v : out) v /= z;
}

inline void moments_column(const Tensor& x, std::span<double> mean, std::span<double> var, std::size_t j) {
  const std::size_t rows = x.rows(), cols = x.cols();
  const double* d = x.data().data();
  double s = 0.0;
  for (std::size_t r = 0; r < rows; ++r) s += d[r * cols + j];
  const double mu = s / static_cast<double>(rows);
  double q = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const double dv = d[r * cols + j] - mu;
    q += dv * dv;
  }
  mean[j] = mu;
  var[j] = q / static_cast<double>(rows);
}

void check_softmax(const Tensor& x, const Tensor& y) {
  require(x.rank() == 2 && y.shape() == x.shape() && x.cols() > 0, "softmax_rows shape mismatch");
}

void check_moments(const Tensor& x, std::span<double> mean, std::span<double> var) {
  require(x.rank() == 2 && x.rows() > 0 && mean.size() == x.cols() && var.size() == x.cols(),
          "column_moments shape mismatch");
}

}  // namespace

void gemm(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  check_gemm(a.rows(), a.cols(), b.rows(), b.cols(), c);
  const long m = static_cast<long>(a.rows());
  const long work = m * static_cast<long>(a.cols() * b.cols());
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (long i = 0; i < m; ++i) gemm_row(a, b, c, static_cast<std::size_t>(i), accumulate);
}

void gemm_at_b(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  require(a.rows() == b.rows(), "gemm_at_b row counts differ");
  check_gemm(a.cols(), a.rows(), b.rows(), b.cols(), c);
  const long p = static_cast<long>(a.cols());
  const long work = p * static_cast<long>(a.rows() * b.cols());
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (long i = 0; i < p; ++i) gemm_at_b_row(a, b, c, static_cast<std::size_t>(i), accumulate);
}

void gemm_a_bt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  check_gemm(a.rows(), a.cols(), b.cols(), b.rows(), c);
  const Tensor bt = transposed(b);
  const long m = static_cast<long>(a.rows());
  const long work = m * static_cast<long>(a.cols() * b.rows());
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (long i = 0; i < m; ++i) gemm_row(a, bt, c, static_cast<std::size_t>(i), accumulate);
}

void softmax_rows(const Tensor& x, Tensor& y) {
  check_softmax(x, y);
  const long rows = static_cast<long>(x.rows());
#pragma omp parallel for schedule(static) if (rows * static_cast<long>(x.cols()) > kParallelWork)
  for (long i = 0; i < rows; ++i) softmax_row(x, y, static_cast<std::size_t>(i));
}

void column_moments(const Tensor& x, std::span<double> mean, std::span<double> var) {
  check_moments(x, mean, var);
  const long cols = static_cast<long>(x.cols());
#pragma omp parallel for schedule(static) if (cols * static_cast<long>(x.rows()) > kParallelWork)
  for (long j = 0; j < cols; ++j) moments_column(x, mean, var, static_cast<std::size_t>(j));
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace reference {

void gemm(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  check_gemm(a.rows(), a.cols(), b.rows(), b.cols(), c);
  for (std::size_t i = 0; i < a.rows(); ++i) gemm_row(a, b, c, i, accumulate);
}

void gemm_at_b(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  require(a.rows() == b.rows(), "gemm_at_b row counts differ");
  check_gemm(a.cols(), a.rows(), b.rows(), b.cols(), c);
  for (std::size_t i = 0; i < a.cols(); ++i) gemm_at_b_row(a, b, c, i, accumulate);
}

void gemm_a_bt(const Tensor& a, const Tensor& b, Tensor& c, bool accumulate) {
  check_gemm(a.rows(), a.cols(), b.cols(), b.rows(), c);
  const Tensor bt = transposed(b);
  for (std::size_t i = 0; i < a.rows(); ++i) gemm_row(a, bt, c, i, accumulate);
}

void softmax_rows(const Tensor& x, Tensor& y) {
  check_softmax(x, y);
  for (std::size_t i = 0; i < x.rows(); ++i) softmax_row(x, y, i);
}

void column_moments(const Tensor& x, std::span<double> mean, std::span<double> var) {
  check_moments(x, mean, var);
  for (std::size_t j = 0; j < x.cols(); ++j) moments_column(x, mean, var, j);
}

}  // namespace reference
}  // namespace f2scil::kernels
