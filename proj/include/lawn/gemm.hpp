#pragma once

namespace lawn {

/// Row-major single-precision matrix kernels. Every output element is
/// accumulated over k in a fixed order, so results are bit-identical for any
/// thread count; the *_parallel variants split rows of C across threads.
///
/// C[M,N] = A[M,K] * B[K,N] (+ C when accumulate)
void sgemm(const float* a, int lda, const float* b, int ldb, float* c, int ldc,
           int m, int k, int n, bool accumulate);
void sgemm_parallel(const float* a, int lda, const float* b, int ldb, float* c,
                    int ldc, int m, int k, int n, bool accumulate);

/// C[M,N] = A^T * B with A stored [K,M] row-major (i.e. logical A is A^T).
void sgemm_at(const float* a, int lda, const float* b, int ldb, float* c,
              int ldc, int m, int k, int n, bool accumulate);
void sgemm_at_parallel(const float* a, int lda, const float* b, int ldb,
                       float* c, int ldc, int m, int k, int n, bool accumulate);

/// C[M,N] = A * B^T with B stored [N,K] row-major. Dot-product form; C should
/// be small enough to stay cache-resident.
void sgemm_bt(const float* a, int lda, const float* b, int ldb, float* c,
              int ldc, int m, int k, int n, bool accumulate);

}  // namespace lawn
