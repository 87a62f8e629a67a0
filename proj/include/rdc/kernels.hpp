#pragma once

#include <cstdint>
#include <vector>

#include "rdc/tensor.hpp"

// Low-level dense kernels behind the nn layers. All loops are written so
// that every output element is produced by exactly one thread with a fixed
// accumulation order: results are bitwise reproducible for any thread count.

namespace rdc::kernels {

// C[M,N] += A[M,K] * B[K,N], row-major.
template <typename T>
void gemm_ab(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const T av = arow[p];
      if (av == T(0)) continue;
      const T* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[M,N] += A[M,K] * B[N,K]^T  (rows of A dotted with rows of B).
template <typename T>
void gemm_abt(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const T* arow = a + i * k;
    T* crow = c + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const T* brow = b + j * k;
      T acc = T(0);
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[M,N] += A[K,M]^T * B[K,N]. A is transposed into scratch first so the
// hot loop streams contiguously.
template <typename T>
void gemm_atb(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  std::vector<T> at(static_cast<size_t>(m) * k);
  for (int64_t p = 0; p < k; ++p)
    for (int64_t i = 0; i < m; ++i) at[i * k + p] = a[p * m + i];
  gemm_ab(at.data(), b, c, m, k, n);
}

// im2col for a single image plane set: x[C,H,W] -> col[C*k*k, OH*OW] with
// sampling position (oy*stride - pad + ky, ox*stride - pad + kx).
template <typename T>
void im2col(const T* x, int64_t c, int64_t h, int64_t w, int64_t ksize,
            int64_t stride, int64_t pad, int64_t oh, int64_t ow, T* col) {
  const int64_t plane = oh * ow;
  for (int64_t ch = 0; ch < c; ++ch) {
    const T* xc = x + ch * h * w;
    for (int64_t ky = 0; ky < ksize; ++ky) {
      for (int64_t kx = 0; kx < ksize; ++kx) {
        T* dst = col + ((ch * ksize + ky) * ksize + kx) * plane;
        for (int64_t oy = 0; oy < oh; ++oy) {
          const int64_t iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) {
            for (int64_t ox = 0; ox < ow; ++ox) dst[oy * ow + ox] = T(0);
            continue;
          }
          for (int64_t ox = 0; ox < ow; ++ox) {
            const int64_t ix = ox * stride - pad + kx;
            dst[oy * ow + ox] =
                (ix >= 0 && ix < w) ? xc[iy * w + ix] : T(0);
          }
        }
      }
    }
  }
}

// Scatter-accumulate inverse of im2col: col[C*k*k, GH*GW] += into
// out[C,H,W] at (gy*stride - pad + ky, gx*stride - pad + kx).
// Also the forward pass of a transposed convolution.
template <typename T>
void col2im(const T* col, int64_t c, int64_t h, int64_t w, int64_t ksize,
            int64_t stride, int64_t pad, int64_t gh, int64_t gw, T* out) {
  const int64_t plane = gh * gw;
  for (int64_t ch = 0; ch < c; ++ch) {
    T* oc = out + ch * h * w;
    for (int64_t ky = 0; ky < ksize; ++ky) {
      for (int64_t kx = 0; kx < ksize; ++kx) {
        const T* src = col + ((ch * ksize + ky) * ksize + kx) * plane;
        for (int64_t gy = 0; gy < gh; ++gy) {
          const int64_t iy = gy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int64_t gx = 0; gx < gw; ++gx) {
            const int64_t ix = gx * stride - pad + kx;
            if (ix >= 0 && ix < w) oc[iy * w + ix] += src[gy * gw + gx];
          }
        }
      }
    }
  }
}

inline int64_t conv_out_size(int64_t in, int64_t ksize, int64_t stride,
                             int64_t pad) {
  return (in + 2 * pad - ksize) / stride + 1;
}

inline int64_t deconv_out_size(int64_t in, int64_t ksize, int64_t stride,
                               int64_t pad, int64_t outpad) {
  return (in - 1) * stride - 2 * pad + ksize + outpad;
}

}  // namespace rdc::kernels
