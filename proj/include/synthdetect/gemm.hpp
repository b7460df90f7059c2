#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace synthdetect::detail {

// Row-major kernels. Every output element accumulates its products in
// ascending k order (the k-blocking only changes when a block is visited, not
// the order), so results are bit-reproducible and match a naive triple loop.

// C[m x n] += A[m x k] * B[k x n]
template <class T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* A, const T* B, T* C) {
  constexpr std::size_t kBlock = 128;
  for (std::size_t k0 = 0; k0 < k; k0 += kBlock) {
    const std::size_t k1 = std::min(k, k0 + kBlock);
    for (std::size_t i = 0; i < m; ++i) {
      T* __restrict c = C + i * n;
      const T* a = A + i * k;
      for (std::size_t p = k0; p < k1; ++p) {
        const T av = a[p];
        const T* __restrict b = B + p * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
      }
    }
  }
}

// C[m x n] += A^T * B, A stored k x m.
template <class T>
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const T* A, const T* B, T* C) {
  for (std::size_t p = 0; p < k; ++p) {
    const T* a = A + p * m;
    const T* __restrict b = B + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const T av = a[i];
      T* __restrict c = C + i * n;
      for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

template <class T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t r1 = std::min(rows, r0 + kTile);
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
      }
    }
  }
}

// C[m x n] += A * B^T, B stored n x k.
template <class T>
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const T* A, const T* B, T* C) {
  std::vector<T> bt(k * n);
  transpose(n, k, B, bt.data());
  gemm_nn(m, n, k, A, bt.data(), C);
}

}  // namespace synthdetect::detail
