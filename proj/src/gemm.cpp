#include "lawn/gemm.hpp"

#include <cstring>

#include "lawn/parallel.hpp"

namespace lawn {

namespace {

// 4x32 (and 4x8) register tiles: the accumulators stay in vector registers
// across the whole k loop, B tile rows are loaded once per k, and the
// per-element accumulation order is always k-ascending.

template <int JT, bool ATrans>
inline void tile4(const float* __restrict a, long lda, long i, const float* __restrict b,
                  long ldb, float* __restrict c0, float* __restrict c1,
                  float* __restrict c2, float* __restrict c3, int k, long jb) {
  float acc0[JT], acc1[JT], acc2[JT], acc3[JT];
  for (int j = 0; j < JT; ++j) {
    acc0[j] = c0[jb + j];
    acc1[j] = c1[jb + j];
    acc2[j] = c2[jb + j];
    acc3[j] = c3[jb + j];
  }
  for (int p = 0; p < k; ++p) {
    const float* br = b + p * ldb + jb;
    float v0, v1, v2, v3;
    if constexpr (ATrans) {
      const float* ar = a + p * lda + i;
      v0 = ar[0]; v1 = ar[1]; v2 = ar[2]; v3 = ar[3];
    } else {
      v0 = a[i * lda + p];
      v1 = a[(i + 1) * lda + p];
      v2 = a[(i + 2) * lda + p];
      v3 = a[(i + 3) * lda + p];
    }
    for (int j = 0; j < JT; ++j) {
      float bj = br[j];
      acc0[j] += v0 * bj;
      acc1[j] += v1 * bj;
      acc2[j] += v2 * bj;
      acc3[j] += v3 * bj;
    }
  }
  for (int j = 0; j < JT; ++j) {
    c0[jb + j] = acc0[j];
    c1[jb + j] = acc1[j];
    c2[jb + j] = acc2[j];
    c3[jb + j] = acc3[j];
  }
}

template <bool ATrans>
inline float a_at(const float* a, long lda, long i, int p) {
  return ATrans ? a[static_cast<long>(p) * lda + i] : a[i * lda + p];
}

template <bool ATrans>
void gemm_rows(const float* a, int lda, const float* b, int ldb, float* c, int ldc,
               long row_begin, long row_end, int k, int n, bool accumulate) {
  if (!accumulate) {
    for (long r = row_begin; r < row_end; ++r)
      std::memset(c + r * ldc, 0, sizeof(float) * static_cast<size_t>(n));
  }
  long i = row_begin;
  for (; i + 4 <= row_end; i += 4) {
    float* c0 = c + i * ldc;
    float* c1 = c0 + ldc;
    float* c2 = c1 + ldc;
    float* c3 = c2 + ldc;
    long jb = 0;
    for (; jb + 32 <= n; jb += 32) tile4<32, ATrans>(a, lda, i, b, ldb, c0, c1, c2, c3, k, jb);
    for (; jb + 8 <= n; jb += 8) tile4<8, ATrans>(a, lda, i, b, ldb, c0, c1, c2, c3, k, jb);
    for (; jb < n; ++jb) {
      float s0 = c0[jb], s1 = c1[jb], s2 = c2[jb], s3 = c3[jb];
      for (int p = 0; p < k; ++p) {
        float bj = b[static_cast<long>(p) * ldb + jb];
        s0 += a_at<ATrans>(a, lda, i, p) * bj;
        s1 += a_at<ATrans>(a, lda, i + 1, p) * bj;
        s2 += a_at<ATrans>(a, lda, i + 2, p) * bj;
        s3 += a_at<ATrans>(a, lda, i + 3, p) * bj;
      }
      c0[jb] = s0; c1[jb] = s1; c2[jb] = s2; c3[jb] = s3;
    }
  }
  for (; i < row_end; ++i) {
    float* __restrict cr = c + i * ldc;
    for (int p = 0; p < k; ++p) {
      const float v = a_at<ATrans>(a, lda, i, p);
      const float* __restrict br = b + static_cast<long>(p) * ldb;
      for (int j = 0; j < n; ++j) cr[j] += v * br[j];
    }
  }
}

}  // namespace

void sgemm(const float* a, int lda, const float* b, int ldb, float* c, int ldc,
           int m, int k, int n, bool accumulate) {
  gemm_rows<false>(a, lda, b, ldb, c, ldc, 0, m, k, n, accumulate);
}

void sgemm_parallel(const float* a, int lda, const float* b, int ldb, float* c,
                    int ldc, int m, int k, int n, bool accumulate) {
  parallel_for(m, [&](int64_t r0, int64_t r1) {
    gemm_rows<false>(a, lda, b, ldb, c, ldc, r0, r1, k, n, accumulate);
  });
}

void sgemm_at(const float* a, int lda, const float* b, int ldb, float* c,
              int ldc, int m, int k, int n, bool accumulate) {
  gemm_rows<true>(a, lda, b, ldb, c, ldc, 0, m, k, n, accumulate);
}

void sgemm_at_parallel(const float* a, int lda, const float* b, int ldb,
                       float* c, int ldc, int m, int k, int n, bool accumulate) {
  parallel_for(m, [&](int64_t r0, int64_t r1) {
    gemm_rows<true>(a, lda, b, ldb, c, ldc, r0, r1, k, n, accumulate);
  });
}

namespace {

// Dot product with a fixed 16-lane partial-sum structure; the lane layout is
// part of the definition, so results do not depend on vector width or thread
// count (plain reductions do not vectorize under strict FP semantics).
inline float dot16(const float* __restrict a, const float* __restrict b, int k) {
  float lanes[16] = {};
  int p = 0;
  for (; p + 16 <= k; p += 16)
    for (int l = 0; l < 16; ++l) lanes[l] += a[p + l] * b[p + l];
  for (; p < k; ++p) lanes[p % 16] += a[p] * b[p];
  float s01 = (((lanes[0] + lanes[8]) + (lanes[4] + lanes[12])) +
               ((lanes[2] + lanes[10]) + (lanes[6] + lanes[14])));
  float s23 = (((lanes[1] + lanes[9]) + (lanes[5] + lanes[13])) +
               ((lanes[3] + lanes[11]) + (lanes[7] + lanes[15])));
  return s01 + s23;
}

}  // namespace

void sgemm_bt(const float* a, int lda, const float* b, int ldb, float* c,
              int ldc, int m, int k, int n, bool accumulate) {
  // j outer keeps one B row hot across all of A; C should be cache-resident.
  if (!accumulate) {
    for (int i = 0; i < m; ++i)
      std::memset(c + static_cast<long>(i) * ldc, 0, sizeof(float) * static_cast<size_t>(n));
  }
  for (int j = 0; j < n; ++j) {
    const float* br = b + static_cast<long>(j) * ldb;
    for (int i = 0; i < m; ++i) {
      c[static_cast<long>(i) * ldc + j] += dot16(a + static_cast<long>(i) * lda, br, k);
    }
  }
}

}  // namespace lawn
