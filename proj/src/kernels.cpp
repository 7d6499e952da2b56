#include "metaclust/kernels.hpp"

#include <algorithm>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace metaclust::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 15;

// B^T materialised so every row update below is a contiguous axpy.
std::vector<double> transposed(std::span<const double> b, std::size_t rows, std::size_t cols) {
  std::vector<double> t(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) t[c * rows + r] = b[r * cols + c];
  return t;
}

// One output row of C; b is k x n row-major.
inline void gemm_row(const GemmShape& s, std::span<const double> a, const double* b, double* c,
                     std::size_t i) {
  std::fill(c, c + s.n, 0.0);
  for (std::size_t p = 0; p < s.k; ++p) {
    const double aip = s.trans_a ? a[p * s.m + i] : a[i * s.k + p];
    if (aip == 0.0) continue;
    const double* brow = b + p * s.n;
    for (std::size_t j = 0; j < s.n; ++j) c[j] += aip * brow[j];
  }
}

inline void sqdist_row(std::size_t k, std::size_t dim, const double* a, const double* b,
                       double* d) {
  for (std::size_t j = 0; j < k; ++j) {
    const double* bj = b + j * dim;
    double acc = 0.0;
    for (std::size_t s = 0; s < dim; ++s) {
      const double diff = a[s] - bj[s];
      acc += diff * diff;
    }
    d[j] = acc;
  }
}

inline void l1_row(std::size_t n, std::size_t c, const double* a, std::size_t i, double* d) {
  const double* ai = a + i * c;
  for (std::size_t j = 0; j < n; ++j) {
    const double* aj = a + j * c;
    double acc = 0.0;
    for (std::size_t q = 0; q < c; ++q) {
      const double diff = ai[q] - aj[q];
      acc += diff < 0.0 ? -diff : diff;
    }
    d[j] = acc;
  }
}

inline void l1_backward_row(std::size_t n, std::size_t c, const double* a, const double* g,
                            std::size_t i, double* grad) {
  const double* ai = a + i * c;
  double* gi = grad + i * c;
  std::fill(gi, gi + c, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double w = g[i * n + j] + g[j * n + i];
    if (w == 0.0) continue;
    const double* aj = a + j * c;
    for (std::size_t q = 0; q < c; ++q) {
      const double diff = ai[q] - aj[q];
      if (diff > 0.0)
        gi[q] += w;
      else if (diff < 0.0)
        gi[q] -= w;
    }
  }
}

}  // namespace

namespace serial {

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  std::vector<double> bt;
  const double* bp = b.data();
  if (s.trans_b) {
    bt = transposed(b, s.n, s.k);
    bp = bt.data();
  }
  for (std::size_t i = 0; i < s.m; ++i) gemm_row(s, a, bp, c.data() + i * s.n, i);
}

void row_sqdist(std::size_t n, std::size_t k, std::size_t dim, std::span<const double> a,
                std::span<const double> b, std::span<double> d) {
  for (std::size_t i = 0; i < n; ++i) sqdist_row(k, dim, a.data() + i * dim, b.data(), d.data() + i * k);
}

void pairwise_l1(std::size_t n, std::size_t c, std::span<const double> a, std::span<double> d) {
  for (std::size_t i = 0; i < n; ++i) l1_row(n, c, a.data(), i, d.data() + i * n);
}

void pairwise_l1_backward(std::size_t n, std::size_t c, std::span<const double> a,
                          std::span<const double> g, std::span<double> grad) {
  for (std::size_t i = 0; i < n; ++i) l1_backward_row(n, c, a.data(), g.data(), i, grad.data());
}

}  // namespace serial

namespace omp {

void gemm(const GemmShape& s, std::span<const double> a, std::span<const double> b,
          std::span<double> c) {
  std::vector<double> bt;
  const double* bp = b.data();
  if (s.trans_b) {
    bt = transposed(b, s.n, s.k);
    bp = bt.data();
  }
  const auto m = static_cast<std::ptrdiff_t>(s.m);
#pragma omp parallel for schedule(static) if (s.m * s.n * s.k > kParallelWork)
  for (std::ptrdiff_t i = 0; i < m; ++i)
    gemm_row(s, a, bp, c.data() + i * s.n, static_cast<std::size_t>(i));
}

void row_sqdist(std::size_t n, std::size_t k, std::size_t dim, std::span<const double> a,
                std::span<const double> b, std::span<double> d) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * k * dim > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    sqdist_row(k, dim, a.data() + i * dim, b.data(), d.data() + i * k);
}

void pairwise_l1(std::size_t n, std::size_t c, std::span<const double> a, std::span<double> d) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * n * c > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    l1_row(n, c, a.data(), static_cast<std::size_t>(i), d.data() + i * n);
}

void pairwise_l1_backward(std::size_t n, std::size_t c, std::span<const double> a,
                          std::span<const double> g, std::span<double> grad) {
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static) if (n * n * c > kParallelWork)
  for (std::ptrdiff_t i = 0; i < rows; ++i)
    l1_backward_row(n, c, a.data(), g.data(), static_cast<std::size_t>(i), grad.data());
}

}  // namespace omp

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace metaclust::kernels
