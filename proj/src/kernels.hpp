#pragma once

// Dense kernels shared by the autodiff ops. Every output entry is summed in a
// fixed order (ascending inner index, starting from the existing value of c)
// that does not depend on how many rows are processed together, so batched
// and per-sample results agree bitwise.

#include <cstddef>
#include <vector>

namespace xnn::kernels {

namespace detail {

// A(i, r) = a[i·ais + r·ars]; B is row-major n×p; C row-major m×p.
// Register tiles of R rows × J columns; each accumulator walks r upwards.
template <std::size_t R, std::size_t J>
inline void tile(const double* a, std::size_t ais, std::size_t ars, const double* b, double* c, std::size_t i,
                 std::size_t j, std::size_t n, std::size_t p) {
  double acc[R][J];
  for (std::size_t ii = 0; ii < R; ++ii)
    for (std::size_t jj = 0; jj < J; ++jj) acc[ii][jj] = c[(i + ii) * p + j + jj];
  for (std::size_t r = 0; r < n; ++r) {
    const double* br = b + r * p + j;
    for (std::size_t ii = 0; ii < R; ++ii) {
      const double av = a[(i + ii) * ais + r * ars];
      for (std::size_t jj = 0; jj < J; ++jj) acc[ii][jj] += av * br[jj];
    }
  }
  for (std::size_t ii = 0; ii < R; ++ii)
    for (std::size_t jj = 0; jj < J; ++jj) c[(i + ii) * p + j + jj] = acc[ii][jj];
}

template <std::size_t R>
inline void row_block(const double* a, std::size_t ais, std::size_t ars, const double* b, double* c, std::size_t i,
                      std::size_t n, std::size_t p) {
  std::size_t j = 0;
  for (; j + 4 <= p; j += 4) tile<R, 4>(a, ais, ars, b, c, i, j, n, p);
  for (; j < p; ++j) tile<R, 1>(a, ais, ars, b, c, i, j, n, p);
}

inline void gemm(const double* a, std::size_t ais, std::size_t ars, const double* b, double* c, std::size_t m,
                 std::size_t n, std::size_t p) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) row_block<4>(a, ais, ars, b, c, i, n, p);
  for (; i < m; ++i) row_block<1>(a, ais, ars, b, c, i, n, p);
}

}  // namespace detail

// c[m×p] += a[m×n] · b[n×p]
inline void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t p) {
  detail::gemm(a, n, 1, b, c, m, n, p);
}

// c[m×p] += aᵀ · b where a is stored n×m and b is n×p.
inline void gemm_tn(const double* a, const double* b, double* c, std::size_t n, std::size_t m, std::size_t p) {
  detail::gemm(a, 1, m, b, c, m, n, p);
}

// c[m×p] += a[m×n] · bᵀ where b is stored p×n.
inline void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t p) {
  std::vector<double> bt(n * p);
  for (std::size_t j = 0; j < p; ++j)
    for (std::size_t r = 0; r < n; ++r) bt[r * p + j] = b[j * n + r];
  gemm_nn(a, bt.data(), c, m, n, p);
}

}  // namespace xnn::kernels
