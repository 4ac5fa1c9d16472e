#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstring>

#include "fnf/tensor.h"

// Shared convolution plumbing: im2col patch extraction and Eigen-backed GEMM.
// All convolutions in this project are stride-1 cross-correlations.

namespace fnf::conv {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

struct Geom {
  int kh = 1, kw = 1;
  int dil = 1;
  int pad_y = 0, pad_x = 0;
  int out_h = 0, out_w = 0;
};

// "same" output size; requires odd kernels so the padding is symmetric.
inline Geom same_geom(int h, int w, int k, int dil) {
  Geom g;
  g.kh = g.kw = k;
  g.dil = dil;
  g.pad_y = g.pad_x = ((k - 1) * dil) / 2;
  g.out_h = h;
  g.out_w = w;
  return g;
}

inline Geom valid_geom(int h, int w, int kh, int kw) {
  Geom g;
  g.kh = kh;
  g.kw = kw;
  g.out_h = h - kh + 1;
  g.out_w = w - kw + 1;
  return g;
}

// src is HxWxC; out has out_h*out_w rows and kh*kw*C columns, so that
// out * reshape(weights, kh*kw*C x Cout) yields the correlation result.
template <typename T>
void im2col(const T* src, int h, int w, int c, const Geom& g, T* out) {
  const int cols = g.kh * g.kw * c;
  const size_t kwc = static_cast<size_t>(g.kw) * c;
#pragma omp parallel for schedule(static)
  for (int oy = 0; oy < g.out_h; ++oy) {
    T* row = out + static_cast<size_t>(oy) * g.out_w * cols;
    for (int ox = 0; ox < g.out_w; ++ox) {
      for (int ky = 0; ky < g.kh; ++ky) {
        const int sy = oy + ky * g.dil - g.pad_y;
        if (sy < 0 || sy >= h) {
          std::fill(row, row + kwc, T(0));
          row += kwc;
          continue;
        }
        const T* src_row = src + static_cast<size_t>(sy) * w * c;
        for (int kx = 0; kx < g.kw; ++kx) {
          const int sx = ox + kx * g.dil - g.pad_x;
          if (sx < 0 || sx >= w) {
            std::fill(row, row + c, T(0));
          } else {
            std::memcpy(row, src_row + static_cast<size_t>(sx) * c, sizeof(T) * c);
          }
          row += c;
        }
      }
    }
  }
}

// C (m x n) = A (m x k) * B (k x n), all row-major.
template <typename T>
void gemm(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  CMapMat<T> ma(a, m, k);
  CMapMat<T> mb(b, k, n);
  MapMat<T> mc(c, m, n);
  mc.noalias() = ma * mb;
}

// C (m x n) += A (m x k) * B (k x n)
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  CMapMat<T> ma(a, m, k);
  CMapMat<T> mb(b, k, n);
  MapMat<T> mc(c, m, n);
  mc.noalias() += ma * mb;
}

// C (k x n) = A^T * B where A is (m x k), B is (m x n)
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int64_t m, int64_t k, int64_t n) {
  CMapMat<T> ma(a, m, k);
  CMapMat<T> mb(b, m, n);
  MapMat<T> mc(c, k, n);
  mc.noalias() = ma.transpose() * mb;
}

// Scratch buffers for patch matrices, reused across calls per thread.
template <typename T>
inline std::vector<T>& scratch(size_t n, int which = 0) {
  thread_local std::vector<T> bufs[3];
  auto& buf = bufs[which];
  if (buf.size() < n) buf.resize(n);
  return buf;
}

}  // namespace fnf::conv
