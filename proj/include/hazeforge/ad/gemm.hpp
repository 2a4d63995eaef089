#pragma once

#include <cstring>

#include "hazeforge/parallel.hpp"

namespace hazeforge::ad {

// C[M x N] (+)= A[M x K] * B[K x N], all row-major. Register-tiled over 4 C
// rows x one column block, with the summation dimension processed in cache
// sized chunks so the streamed B panel stays in L2. Per output element the
// k partial sums accumulate in a fixed ascending order, so results do not
// depend on the thread count.
template <typename T>
void gemm(const T* A, const T* B, T* C, int M, int N, int K, bool accumulate) {
    constexpr int kColBlock = 128;
    constexpr int kRowBlock = 4;
    constexpr int kKBlock = 256;

    if (K <= 8) {
        // short summation dimension: accumulate straight into C rows
#pragma omp parallel for schedule(static) if (threads() > 1 && static_cast<long>(M) * N >= 1 << 16)
        for (int i = 0; i < M; ++i) {
            T* ci = C + static_cast<size_t>(i) * N;
            const T* ai = A + static_cast<size_t>(i) * K;
            const T v0 = ai[0];
            if (accumulate) {
#pragma omp simd
                for (int j = 0; j < N; ++j) ci[j] += v0 * B[j];
            } else {
#pragma omp simd
                for (int j = 0; j < N; ++j) ci[j] = v0 * B[j];
            }
            for (int k = 1; k < K; ++k) {
                const T* bk = B + static_cast<size_t>(k) * N;
                const T v = ai[k];
#pragma omp simd
                for (int j = 0; j < N; ++j) ci[j] += v * bk[j];
            }
        }
        return;
    }
#pragma omp parallel for schedule(static) if (threads() > 1 && static_cast<long>(M) * N >= 1 << 14)
    for (int jb = 0; jb < N; jb += kColBlock) {
        const int jw = N - jb < kColBlock ? N - jb : kColBlock;
        for (int kb = 0; kb < K; kb += kKBlock) {
            const int kw = K - kb < kKBlock ? K - kb : kKBlock;
            const bool first = kb == 0 && !accumulate;
            int i = 0;
            for (; i + kRowBlock <= M; i += kRowBlock) {
                T acc0[kColBlock], acc1[kColBlock], acc2[kColBlock], acc3[kColBlock];
                for (int j = 0; j < jw; ++j) acc0[j] = acc1[j] = acc2[j] = acc3[j] = T(0);
                const T* a0 = A + static_cast<size_t>(i) * K + kb;
                const T* a1 = a0 + K;
                const T* a2 = a1 + K;
                const T* a3 = a2 + K;
                for (int k = 0; k < kw; ++k) {
                    const T* bk = B + static_cast<size_t>(kb + k) * N + jb;
                    const T v0 = a0[k], v1 = a1[k], v2 = a2[k], v3 = a3[k];
#pragma omp simd
                    for (int j = 0; j < jw; ++j) {
                        acc0[j] += v0 * bk[j];
                        acc1[j] += v1 * bk[j];
                        acc2[j] += v2 * bk[j];
                        acc3[j] += v3 * bk[j];
                    }
                }
                T* c0 = C + static_cast<size_t>(i) * N + jb;
                T* c1 = c0 + N;
                T* c2 = c1 + N;
                T* c3 = c2 + N;
                if (first) {
                    for (int j = 0; j < jw; ++j) c0[j] = acc0[j];
                    for (int j = 0; j < jw; ++j) c1[j] = acc1[j];
                    for (int j = 0; j < jw; ++j) c2[j] = acc2[j];
                    for (int j = 0; j < jw; ++j) c3[j] = acc3[j];
                } else {
                    for (int j = 0; j < jw; ++j) c0[j] += acc0[j];
                    for (int j = 0; j < jw; ++j) c1[j] += acc1[j];
                    for (int j = 0; j < jw; ++j) c2[j] += acc2[j];
                    for (int j = 0; j < jw; ++j) c3[j] += acc3[j];
                }
            }
            for (; i < M; ++i) {
                T acc[kColBlock];
                for (int j = 0; j < jw; ++j) acc[j] = T(0);
                const T* ai = A + static_cast<size_t>(i) * K + kb;
                for (int k = 0; k < kw; ++k) {
                    const T* bk = B + static_cast<size_t>(kb + k) * N + jb;
                    const T v = ai[k];
#pragma omp simd
                    for (int j = 0; j < jw; ++j) acc[j] += v * bk[j];
                }
                T* ci = C + static_cast<size_t>(i) * N + jb;
                if (first)
                    for (int j = 0; j < jw; ++j) ci[j] = acc[j];
                else
                    for (int j = 0; j < jw; ++j) ci[j] += acc[j];
            }
        }
    }
}

// C[M x N] (+)= A[M x L] * B[N x L]^T: every C entry is a dot product of two
// contiguous rows, accumulated in 16 interleaved lanes reduced in a fixed
// order. Used for conv weight gradients (A = dY, B = im2col panel).
template <typename T>
void gemm_abT(const T* A, const T* B, T* C, int M, int N, int L, bool accumulate) {
    constexpr int kLanes = 16;
#pragma omp parallel for schedule(static) if (threads() > 1 && static_cast<long>(M) * N >= 1 << 12)
    for (int j = 0; j < N; ++j) {
        const T* bj = B + static_cast<size_t>(j) * L;
        for (int i = 0; i < M; ++i) {
            const T* ai = A + static_cast<size_t>(i) * L;
            T lanes[kLanes];
            for (int l = 0; l < kLanes; ++l) lanes[l] = T(0);
            int k = 0;
            for (; k + kLanes <= L; k += kLanes) {
#pragma omp simd
                for (int l = 0; l < kLanes; ++l) lanes[l] += ai[k + l] * bj[k + l];
            }
            T acc = T(0);
            for (int l = 0; l < kLanes; ++l) acc += lanes[l];
            for (; k < L; ++k) acc += ai[k] * bj[k];
            T& c = C[static_cast<size_t>(i) * N + j];
            c = accumulate ? c + acc : acc;
        }
    }
}

namespace ref {

// Plain triple loop kept as the reference for the tiled kernel above.
template <typename T>
void gemm(const T* A, const T* B, T* C, int M, int N, int K, bool accumulate) {
    for (int i = 0; i < M; ++i) {
        for (int j = 0; j < N; ++j) {
            T acc = T(0);
            for (int k = 0; k < K; ++k) acc += A[static_cast<size_t>(i) * K + k] * B[static_cast<size_t>(k) * N + j];
            T& c = C[static_cast<size_t>(i) * N + j];
            c = accumulate ? c + acc : acc;
        }
    }
}

template <typename T>
void gemm_abT(const T* A, const T* B, T* C, int M, int N, int L, bool accumulate) {
    for (int i = 0; i < M; ++i) {
        for (int j = 0; j < N; ++j) {
            T acc = T(0);
            for (int k = 0; k < L; ++k) acc += A[static_cast<size_t>(i) * L + k] * B[static_cast<size_t>(j) * L + k];
            T& c = C[static_cast<size_t>(i) * N + j];
            c = accumulate ? c + acc : acc;
        }
    }
}

}  // namespace ref

}  // namespace hazeforge::ad
