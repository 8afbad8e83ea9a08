#include "xdistill/gemm.hpp"

#include <algorithm>
#include <vector>

namespace xd {

namespace {

constexpr int MR = 4;
constexpr int NR = 48;

// a0..a3 are row streams (stride `as` between consecutive k); b is a column
// panel (stride `bs` between consecutive k: NR when packed, ldb when reading
// B in place). Rows beyond the tile edge alias a0 and get discarded by the
// caller, so the a pointers must not carry restrict.
template <bool kLoadC>
void micro_kernel(int K, const real* a0, const real* a1, const real* a2, const real* a3,
                  size_t as, const real* __restrict__ b, size_t bs, real* __restrict__ c0,
                  real* __restrict__ c1, real* __restrict__ c2, real* __restrict__ c3) {
    real acc[MR][NR];
    for (int i = 0; i < NR; ++i) {
        acc[0][i] = kLoadC ? c0[i] : real(0);
        acc[1][i] = kLoadC ? c1[i] : real(0);
        acc[2][i] = kLoadC ? c2[i] : real(0);
        acc[3][i] = kLoadC ? c3[i] : real(0);
    }
    for (int k = 0; k < K; ++k) {
        const real* bk = b + size_t(k) * bs;
        const real av0 = a0[size_t(k) * as];
        const real av1 = a1[size_t(k) * as];
        const real av2 = a2[size_t(k) * as];
        const real av3 = a3[size_t(k) * as];
        for (int i = 0; i < NR; ++i) {
            const real bv = bk[i];
            acc[0][i] += av0 * bv;
            acc[1][i] += av1 * bv;
            acc[2][i] += av2 * bv;
            acc[3][i] += av3 * bv;
        }
    }
    for (int i = 0; i < NR; ++i) {
        c0[i] = acc[0][i];
        c1[i] = acc[1][i];
        c2[i] = acc[2][i];
        c3[i] = acc[3][i];
    }
}

// single-panel scratch, used only for transposed-B and edge panels
thread_local RawVec tl_pack_b;

}  // namespace

void gemm(int M, int N, int K, const real* A, int lda, bool transA, const real* B, int ldb,
          bool transB, real* C, int ldc, bool accumulate) {
    if (M <= 0 || N <= 0) return;
    if (K <= 0) {
        if (!accumulate)
            for (int m = 0; m < M; ++m)
                std::fill(C + (size_t)m * ldc, C + (size_t)m * ldc + N, real(0));
        return;
    }

    const int mpan = (M + MR - 1) / MR;
    const int npan = (N + NR - 1) / NR;
    const size_t as = transA ? size_t(lda) : 1;
    real ctile[MR * NR];

    // n-panels outer so each panel of B stays cache-hot across all m-tiles
    for (int np = 0; np < npan; ++np) {
        const int n0 = np * NR, nw = std::min(NR, N - n0);
        const real* bp;
        size_t bs;
        if (!transB && nw == NR) {
            bp = B + n0;
            bs = size_t(ldb);
        } else {
            if (tl_pack_b.size() < size_t(K) * NR) tl_pack_b.resize(size_t(K) * NR);
            real* dst = tl_pack_b.data();
            for (int k = 0; k < K; ++k) {
                for (int i = 0; i < nw; ++i)
                    dst[k * NR + i] =
                        transB ? B[size_t(n0 + i) * ldb + k] : B[size_t(k) * ldb + n0 + i];
                for (int i = nw; i < NR; ++i) dst[k * NR + i] = real(0);
            }
            bp = dst;
            bs = NR;
        }
        for (int mp = 0; mp < mpan; ++mp) {
            const int m0 = mp * MR, mw = std::min(MR, M - m0);
            const real* a[MR];
            for (int i = 0; i < MR; ++i) {
                const int r = m0 + (i < mw ? i : 0);
                a[i] = transA ? A + r : A + size_t(r) * lda;
            }
            if (mw == MR && nw == NR) {
                real* r0 = C + (size_t)m0 * ldc + n0;
                real* r1 = C + (size_t)(m0 + 1) * ldc + n0;
                real* r2 = C + (size_t)(m0 + 2) * ldc + n0;
                real* r3 = C + (size_t)(m0 + 3) * ldc + n0;
                if (accumulate)
                    micro_kernel<true>(K, a[0], a[1], a[2], a[3], as, bp, bs, r0, r1, r2, r3);
                else
                    micro_kernel<false>(K, a[0], a[1], a[2], a[3], as, bp, bs, r0, r1, r2, r3);
            } else {
                micro_kernel<false>(K, a[0], a[1], a[2], a[3], as, bp, bs, ctile, ctile + NR,
                                    ctile + 2 * NR, ctile + 3 * NR);
                for (int i = 0; i < mw; ++i)
                    for (int j = 0; j < nw; ++j) {
                        real* dst = C + (size_t)(m0 + i) * ldc + n0 + j;
                        if (accumulate)
                            *dst += ctile[i * NR + j];
                        else
                            *dst = ctile[i * NR + j];
                    }
            }
        }
    }
}

}  // namespace xd
