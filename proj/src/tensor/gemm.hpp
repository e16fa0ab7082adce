#pragma once

// Row-major GEMM kernels. Every output element accumulates its products in a
// fixed order independent of threading, so results are bitwise reproducible.

#include <algorithm>
#include <cstddef>

#include "roicodec/tensor/parallel.hpp"

namespace roicodec::detail {

// C[M,N] (+)= A[M,K] * B[K,N]
template <typename T>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  parallel_for(M, std::max<std::size_t>(1, 16384 / std::max<std::size_t>(1, N * K)),
               [&](std::size_t i0, std::size_t i1) {
                 for (std::size_t i = i0; i < i1; ++i) {
                   T* c = C + i * N;
                   if (!accumulate)
                     for (std::size_t j = 0; j < N; ++j) c[j] = T(0);
                   const T* a = A + i * K;
                   for (std::size_t k = 0; k < K; ++k) {
                     const T av = a[k];
                     const T* b = B + k * N;
                     for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
                   }
                 }
               });
}

template <typename T>
inline T dot_lanes(const T* a, const T* b, std::size_t n) {
  constexpr std::size_t L = 8;
  T acc[L] = {};
  std::size_t k = 0;
  for (; k + L <= n; k += L)
    for (std::size_t l = 0; l < L; ++l) acc[l] += a[k + l] * b[k + l];
  T tail = T(0);
  for (; k < n; ++k) tail += a[k] * b[k];
  T s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
  return s + tail;
}

// C[M,N] (+)= A[M,K] * B[N,K]^T
template <typename T>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  parallel_for(M, std::max<std::size_t>(1, 16384 / std::max<std::size_t>(1, N * K)),
               [&](std::size_t i0, std::size_t i1) {
                 for (std::size_t i = i0; i < i1; ++i) {
                   const T* a = A + i * K;
                   T* c = C + i * N;
                   for (std::size_t j = 0; j < N; ++j) {
                     T d = dot_lanes(a, B + j * K, K);
                     c[j] = accumulate ? c[j] + d : d;
                   }
                 }
               });
}

// C[M,N] (+)= A[K,M]^T * B[K,N]
template <typename T>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const T* A, const T* B, T* C,
             bool accumulate) {
  parallel_for(M, std::max<std::size_t>(1, 16384 / std::max<std::size_t>(1, N * K)),
               [&](std::size_t i0, std::size_t i1) {
                 if (!accumulate)
                   for (std::size_t i = i0; i < i1; ++i)
                     for (std::size_t j = 0; j < N; ++j) C[i * N + j] = T(0);
                 for (std::size_t k = 0; k < K; ++k) {
                   const T* b = B + k * N;
                   for (std::size_t i = i0; i < i1; ++i) {
                     const T av = A[k * M + i];
                     T* c = C + i * N;
                     for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
                   }
                 }
               });
}

}  // namespace roicodec::detail
