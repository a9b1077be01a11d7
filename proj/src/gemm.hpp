#pragma once

#include <cstddef>

namespace slk::detail {

// C[M,N] (+)= A[M,K] * B[K,N], row-major with leading dimensions.
// Every output element is an fma chain over k in increasing order, independent
// of its position in C, so shifted inputs give bit-identical shifted outputs.
void gemm(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc,
          bool accumulate);

// C[M,N] (+)= A[M,K] * B[N,K]^T
void gemm_nt(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc,
             bool accumulate);

// C[M,N] (+)= A[K,M]^T * B[K,N]
void gemm_tn(int m, int n, int k, const double* a, int lda, const double* b, int ldb, double* c, int ldc,
             bool accumulate);

}  // namespace slk::detail
