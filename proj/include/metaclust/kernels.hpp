#pragma once

// Dense inner loops used by the autodiff primitives. Every kernel exists
// twice: an OpenMP version (namespace omp, used by the library) and a plain
// serial reference (namespace serial, kept for tests and the benchmark).
// Each output element is accumulated in the same order by both, so results
// are bit-identical regardless of thread count.

#include <cstddef>
#include <span>

namespace metaclust::kernels {

// Dimensions of C = op(A) * op(B), where op(X) is X or X^T.
// A is stored row-major as (trans_a ? k x m : m x k), B as (trans_b ? n x k : k x n).
struct GemmShape {
  std::size_t m = 0, n = 0, k = 0;
  bool trans_a = false, trans_b = false;
};

namespace serial {
void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
// d(n, k) = ||a_n - b_k||^2 for a: N x S, b: K x S.
void row_sqdist(std::size_t n, std::size_t k, std::size_t dim, std::span<const double> a,
                std::span<const double> b, std::span<double> d);
// d(i, j) = sum_c |a_ic - a_jc| for a: N x C.
void pairwise_l1(std::size_t n, std::size_t c, std::span<const double> a, std::span<double> d);
// grad(i, c) = sum_j (g(i, j) + g(j, i)) * sign(a_ic - a_jc), sign(0) = 0.
void pairwise_l1_backward(std::size_t n, std::size_t c, std::span<const double> a,
                          std::span<const double> g, std::span<double> grad);
}  // namespace serial

namespace omp {
void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c);
void row_sqdist(std::size_t n, std::size_t k, std::size_t dim, std::span<const double> a,
                std::span<const double> b, std::span<double> d);
void pairwise_l1(std::size_t n, std::size_t c, std::span<const double> a, std::span<double> d);
void pairwise_l1_backward(std::size_t n, std::size_t c, std::span<const double> a,
                          std::span<const double> g, std::span<double> grad);
}  // namespace omp

int max_threads();

}  // namespace metaclust::kernels
