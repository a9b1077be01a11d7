#include "gemm.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace slk::detail {

namespace {

constexpr int kBlockM = 4;
constexpr int kBlockN = 8;
constexpr int kPanelK = 256;
constexpr int kPanelN = 512;

void kernel_full(int kc, const double* a, int lda, const double* b, int ldb, double* c, int ldc) {
  double acc[kBlockM][kBlockN];
  for (int i = 0; i < kBlockM; ++i)
    for (int j = 0; j < kBlockN; ++j) acc[i][j] = c[i * ldc + j];
  for (int p = 0; p < kc; ++p) {
    const double* brow = b + static_cast<std::ptrdiff_t>(p) * ldb;
    for (int i = 0; i < kBlockM; ++i) {
      const double av = a[i * lda + p];
      for (int j = 0; j < kBlockN; ++j) acc[i][j] = std::fma(av, brow[j], acc[i][j]);
    }
  }
  for (int i = 0; i < kBlockM; ++i)
    for (int j = 0; j < kBlockN; ++j) c[i * ldc + j] = acc[i][j];
}

void kernel_edge(int mr, int nr, int kc, const double* a, int lda, const double* b, int ldb, double* c,
                 int ldc) {
  for (int i = 0; i < mr; ++i) {
    for (int j = 0; j < nr; ++j) {
      double acc = c[i * ldc + j];
      for (int p = 0; p < kc; ++p) acc = std::fma(a[i * lda + p], b[static_cast<std::ptrdiff_t>(p) * ldb + j], acc);
      c[i * ldc + j] = acc;
    }
  }
}

}  // namespace

void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc,
          bool accumulate) {
  if (!accumulate) {
    for (int i = 0; i < m; ++i) std::fill(c + static_cast<std::ptrdiff_t>(i) * ldc, c + static_cast<std::ptrdiff_t>(i) * ldc + n, 0.0);
  }
  if (k == 0) return;
  for (int j0 = 0; j0 < n; j0 += kPanelN) {
    const int nc = std::min(kPanelN, n - j0);
    for (int p0 = 0; p0 < k; p0 += kPanelK) {
      const int kc = std::min(kPanelK, k - p0);
      for (int i0 = 0; i0 < m; i0 += kBlockM) {
        const int mr = std::min(kBlockM, m - i0);
        const double* ap = a + static_cast<std::ptrdiff_t>(i0) * lda + p0;
        for (int jj = 0; jj < nc; jj += kBlockN) {
          const int nr = std::min(kBlockN, nc - jj);
          const double* bp = b + static_cast<std::ptrdiff_t>(p0) * ldb + j0 + jj;
          double* cp = c + static_cast<std::ptrdiff_t>(i0) * ldc + j0 + jj;
          if (mr == kBlockM && nr == kBlockN) {
            kernel_full(kc, ap, lda, bp, ldb, cp, ldc);
          } else {
            kernel_edge(mr, nr, kc, ap, lda, bp, ldb, cp, ldc);
          }
        }
      }
    }
  }
}

void gemm_nt(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc,
             bool accumulate) {
  std::vector<double> bt(static_cast<std::size_t>(k) * n);
  for (int j = 0; j < n; ++j)
    for (int p = 0; p < k; ++p) bt[static_cast<std::size_t>(p) * n + j] = b[static_cast<std::ptrdiff_t>(j) * ldb + p];
  gemm(m, n, k, a, lda, bt.data(), n, c, ldc, accumulate);
}

void gemm_tn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc,
             bool accumulate) {
  std::vector<double> at(static_cast<std::size_t>(m) * k);
  for (int p = 0; p < k; ++p)
    for (int i = 0; i < m; ++i) at[static_cast<std::size_t>(i) * k + p] = a[static_cast<std::ptrdiff_t>(p) * lda + i];
  gemm(m, n, k, at.data(), k, b, ldb, c, ldc, accumulate);
}

}  // namespace slk::detail
