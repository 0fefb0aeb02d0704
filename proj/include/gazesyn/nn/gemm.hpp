#pragma once

#include <cstddef>
#include <vector>

namespace gazesyn::nn::gemm {

/// C(m x n) += A(m x k) * B(k x n), all row-major and densely packed.
/// Four rows of C are updated per pass over a row of B so each B element is
/// loaded once per block; the inner loops are contiguous and vectorize.
inline void nn(std::size_t m, std::size_t n, std::size_t k, const double* __restrict a, const double* __restrict b,
               double* __restrict c) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    double* c0 = c + i * n;
    double* c1 = c0 + n;
    double* c2 = c1 + n;
    double* c3 = c2 + n;
    for (std::size_t p = 0; p < k; ++p) {
      const double a0 = a[i * k + p], a1 = a[(i + 1) * k + p], a2 = a[(i + 2) * k + p], a3 = a[(i + 3) * k + p];
      const double* br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double bv = br[j];
        c0[j] += a0 * bv;
        c1[j] += a1 * bv;
        c2[j] += a2 * bv;
        c3[j] += a3 * bv;
      }
    }
  }
  for (; i < m; ++i) {
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      const double* br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * br[j];
    }
  }
}

/// Row-major transpose of an (r x c) matrix into `out` (c x r).
inline void transpose(std::size_t r, std::size_t c, const double* __restrict in, double* __restrict out) {
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
}

/// C(m x n) += A^T * B with A stored (k x m).
inline void tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
               std::vector<double>& scratch) {
  scratch.resize(m * k);
  transpose(k, m, a, scratch.data());
  nn(m, n, k, scratch.data(), b, c);
}

/// C(m x n) += A * B^T with B stored (n x k).
inline void nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c,
               std::vector<double>& scratch) {
  scratch.resize(k * n);
  transpose(n, k, b, scratch.data());
  nn(m, n, k, a, scratch.data(), c);
}

/// Column buffer for a 1-D convolution: col[(ch*K + kk), j] = x[ch, j*stride + kk - pad]
/// (zero outside the signal). x is (channels x len), col is (channels*K x count).
inline void im2col(const double* x, std::size_t channels, std::size_t len, std::size_t kernel, std::size_t stride,
                   std::size_t pad, std::size_t count, double* col) {
  for (std::size_t ch = 0; ch < channels; ++ch)
    for (std::size_t kk = 0; kk < kernel; ++kk) {
      double* row = col + (ch * kernel + kk) * count;
      const double* xs = x + ch * len;
      for (std::size_t j = 0; j < count; ++j) {
        const std::size_t q = j * stride + kk;
        row[j] = q >= pad && q - pad < len ? xs[q - pad] : 0.0;
      }
    }
}

/// Adjoint of im2col: x[ch, j*stride + kk - pad] += col[(ch*K + kk), j].
inline void col2im(const double* col, std::size_t channels, std::size_t len, std::size_t kernel, std::size_t stride,
                   std::size_t pad, std::size_t count, double* x) {
  for (std::size_t ch = 0; ch < channels; ++ch)
    for (std::size_t kk = 0; kk < kernel; ++kk) {
      const double* row = col + (ch * kernel + kk) * count;
      double* xs = x + ch * len;
      for (std::size_t j = 0; j < count; ++j) {
        const std::size_t q = j * stride + kk;
        if (q >= pad && q - pad < len) xs[q - pad] += row[j];
      }
    }
}

}  // namespace gazesyn::nn::gemm
