#pragma once

#include "xdistill/common.hpp"

namespace xd {

// C[M x N] = A_eff[M x K] * B_eff[K x N] (+= C when accumulate), row-major.
// A_eff[m][k] reads A[m*lda+k], or A[k*lda+m] when transA; same for B.
// Packed panels with a 4 x 48 register-tiled micro kernel; single-threaded,
// fixed summation order.
void gemm(int M, int N, int K, const real* A, int lda, bool transA, const real* B, int ldb,
          bool transB, real* C, int ldc, bool accumulate);

}  // namespace xd
