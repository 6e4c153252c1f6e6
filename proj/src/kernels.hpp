#pragma once

#include <cstddef>

// Dense building blocks for the per-example executor. Every output element
// of gemm is accumulated over k in ascending order starting from zero, so a
// given element's value depends only on its own row of A and column of B.

namespace advms::kernels {

namespace detail {

template <typename T, int MR, int NR>
inline void gemm_tile(const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc,
                      std::size_t k) {
  T acc[MR][NR] = {};
  for (std::size_t p = 0; p < k; ++p) {
    const T* brow = b + p * ldb;
    for (int r = 0; r < MR; ++r) {
      const T av = a[r * lda + p];
      for (int j = 0; j < NR; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (int r = 0; r < MR; ++r)
    for (int j = 0; j < NR; ++j) c[r * ldc + j] = acc[r][j];
}

template <typename T, int MR>
inline void gemm_rows(std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
                      T* c, std::size_t ldc) {
  constexpr int kWide = 128 / static_cast<int>(sizeof(T));
  constexpr int kNarrow = kWide / 2;
  std::size_t j = 0;
  for (; j + kWide <= n; j += kWide) gemm_tile<T, MR, kWide>(a, lda, b + j, ldb, c + j, ldc, k);
  for (; j + kNarrow <= n; j += kNarrow) gemm_tile<T, MR, kNarrow>(a, lda, b + j, ldb, c + j, ldc, k);
  for (; j < n; ++j) gemm_tile<T, MR, 1>(a, lda, b + j, ldb, c + j, ldc, k);
}

}  // namespace detail

/// C (m x n) = A (m x k) * B (k x n), all row-major with explicit strides.
template <typename T>
void gemm(std::size_t m, std::size_t n, std::size_t k, const T* a, std::size_t lda, const T* b, std::size_t ldb,
          T* c, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 8 <= m; i += 8) detail::gemm_rows<T, 8>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc);
  for (; i + 4 <= m; i += 4) detail::gemm_rows<T, 4>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc);
  for (; i < m; ++i) detail::gemm_rows<T, 1>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc);
}

/// dst (cols x rows) = transpose of src (rows x cols).
template <typename T>
void transpose(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t kBlock = 16;
  for (std::size_t i0 = 0; i0 < rows; i0 += kBlock)
    for (std::size_t j0 = 0; j0 < cols; j0 += kBlock)
      for (std::size_t i = i0; i < rows && i < i0 + kBlock; ++i)
        for (std::size_t j = j0; j < cols && j < j0 + kBlock; ++j) dst[j * rows + i] = src[i * cols + j];
}

/// Valid (unpadded) stride-1 patch matrix: row (ci, ky, kx), column (oy, ox).
template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            T* col) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  for (std::size_t ci = 0; ci < channels; ++ci)
    for (std::size_t ky = 0; ky < kh; ++ky)
      for (std::size_t kx = 0; kx < kw; ++kx) {
        T* row = col + ((ci * kh + ky) * kw + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const T* src = x + (ci * h + oy + ky) * w + kx;
          for (std::size_t ox = 0; ox < ow; ++ox) row[oy * ow + ox] = src[ox];
        }
      }
}

/// Adjoint of im2col: dx = 0, then scatter-add every patch entry.
template <typename T>
void col2im(const T* col, std::size_t channels, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            T* dx) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  for (std::size_t i = 0; i < channels * h * w; ++i) dx[i] = T{0};
  for (std::size_t ci = 0; ci < channels; ++ci)
    for (std::size_t ky = 0; ky < kh; ++ky)
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const T* row = col + ((ci * kh + ky) * kw + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          T* dst = dx + (ci * h + oy + ky) * w + kx;
          for (std::size_t ox = 0; ox < ow; ++ox) dst[ox] += row[oy * ow + ox];
        }
      }
}

}  // namespace advms::kernels
