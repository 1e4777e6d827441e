#include "core/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <thread>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif
#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace df::kernels {

int thread_cap() {
  static int cap = [] {
#if defined(__GLIBC__)
    // tensor buffers churn at tens of MB per step; keep them on the heap
    // instead of round-tripping through mmap
    mallopt(M_MMAP_THRESHOLD, 256 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 256 * 1024 * 1024);
#endif
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    n = std::min(n, 8);
    if (const char* env = std::getenv("DENSFIELD_THREADS")) {
      int v = std::atoi(env);
      if (v >= 1) n = std::min(v, 64);
    }
    return n;
  }();
  return cap;
}

namespace {

constexpr int kRowBlock = 4;
constexpr int kColBlock = 16;

// 4x16 register-blocked panel: C[i0..i0+mb) x [j0..j0+nb) accumulated
// over the full k range. a_stride/a_step describe how A is laid out:
// element (i, p) of the logical left matrix sits at A[i*a_stride + p*a_step].
inline void panel(const double* A, int64_t a_stride, int64_t a_step, const double* B, double* C, int k,
                  int n, int i0, int mb, int j0, int nb) {
  double acc[kRowBlock][kColBlock];
  if (mb == kRowBlock && nb == kColBlock) {
    for (auto& row : acc)
      for (double& v : row) v = 0.0;
    const double* a0 = A + static_cast<int64_t>(i0) * a_stride;
    const double* a1 = a0 + a_stride;
    const double* a2 = a1 + a_stride;
    const double* a3 = a2 + a_stride;
    for (int p = 0; p < k; ++p) {
      const double* b = B + static_cast<int64_t>(p) * n + j0;
      const double v0 = a0[p * a_step], v1 = a1[p * a_step], v2 = a2[p * a_step], v3 = a3[p * a_step];
      for (int j = 0; j < kColBlock; ++j) {
        const double bj = b[j];
        acc[0][j] += v0 * bj;
        acc[1][j] += v1 * bj;
        acc[2][j] += v2 * bj;
        acc[3][j] += v3 * bj;
      }
    }
    for (int i = 0; i < kRowBlock; ++i) {
      double* c = C + static_cast<int64_t>(i0 + i) * n + j0;
      for (int j = 0; j < kColBlock; ++j) c[j] += acc[i][j];
    }
    return;
  }
  for (int i = 0; i < mb; ++i) {
    double tail[kColBlock] = {};
    const double* a = A + static_cast<int64_t>(i0 + i) * a_stride;
    for (int p = 0; p < k; ++p) {
      const double av = a[p * a_step];
      const double* b = B + static_cast<int64_t>(p) * n + j0;
      for (int j = 0; j < nb; ++j) tail[j] += av * b[j];
    }
    double* c = C + static_cast<int64_t>(i0 + i) * n + j0;
    for (int j = 0; j < nb; ++j) c[j] += tail[j];
  }
}

void matmul_blocked(const double* A, int64_t a_stride, int64_t a_step, const double* B, double* C, int m,
                    int k, int n) {
  const int nt = thread_cap();
  const int row_blocks = (m + kRowBlock - 1) / kRowBlock;
#pragma omp parallel num_threads(nt) if (row_blocks > 1 && static_cast<int64_t>(m) * k * n > 65536)
  {
    static thread_local std::vector<double> pack;
#ifdef _OPENMP
    const int tid = omp_get_thread_num(), tcount = omp_get_num_threads();
#else
    const int tid = 0, tcount = 1;
#endif
    for (int rb = tid; rb < row_blocks; rb += tcount) {
      const int i0 = rb * kRowBlock;
      const int mb = std::min(kRowBlock, m - i0);
      const double* a_src = A;
      int64_t stride = a_stride, step = a_step, base_row = i0;
      if (a_step != 1) {
        // pack the strided row block once so every column tile streams
        // contiguous memory
        pack.resize(static_cast<size_t>(mb) * k);
        for (int p = 0; p < k; ++p)
          for (int i = 0; i < mb; ++i)
            pack[static_cast<size_t>(i) * k + static_cast<size_t>(p)] =
                A[static_cast<int64_t>(i0 + i) * a_stride + p * a_step];
        a_src = pack.data();
        stride = k;
        step = 1;
        base_row = 0;
      }
      for (int j0 = 0; j0 < n; j0 += kColBlock) {
        const int nb = std::min(kColBlock, n - j0);
        panel(a_src, stride, step, B, C + (static_cast<int64_t>(i0) - base_row) * n, k, n,
              static_cast<int>(base_row), mb, j0, nb);
      }
    }
  }
}

}  // namespace

void matmul_nn(const double* A, const double* B, double* C, int m, int k, int n) {
  matmul_blocked(A, k, 1, B, C, m, k, n);
}

void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n) {
  matmul_blocked(A, 1, m, B, C, m, k, n);
}

void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n) {
  const int nt = thread_cap();
#pragma omp parallel for schedule(static) num_threads(nt) if (m > 1 && static_cast<int64_t>(m) * k * n > 65536)
  for (int i = 0; i < m; ++i) {
    double* c = C + static_cast<int64_t>(i) * n;
    const double* a = A + static_cast<int64_t>(i) * k;
    for (int j = 0; j < n; ++j) {
      const double* b = B + static_cast<int64_t>(j) * k;
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (int p = 0; p < k; ++p) acc += a[p] * b[p];
      c[j] += acc;
    }
  }
}

void im2col(const double* in, int c, int h, int w, int kh, int kw, int stride,
            int pad, int ho, int wo, double* cols) {
  const int64_t plane = static_cast<int64_t>(ho) * wo;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        double* dst = cols + ((static_cast<int64_t>(ci) * kh + ky) * kw + kx) * plane;
        const double* src = in + static_cast<int64_t>(ci) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) {
            std::memset(dst + static_cast<int64_t>(oy) * wo, 0, sizeof(double) * static_cast<size_t>(wo));
            continue;
          }
          const double* row = src + static_cast<int64_t>(iy) * w;
          double* drow = dst + static_cast<int64_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            drow[ox] = (ix >= 0 && ix < w) ? row[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, int c, int h, int w, int kh, int kw, int stride,
            int pad, int ho, int wo, double* in_grad) {
  const int64_t plane = static_cast<int64_t>(ho) * wo;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx) {
        const double* src = cols + ((static_cast<int64_t>(ci) * kh + ky) * kw + kx) * plane;
        double* dst = in_grad + static_cast<int64_t>(ci) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          double* row = dst + static_cast<int64_t>(iy) * w;
          const double* srow = src + static_cast<int64_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) row[ix] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace df::kernels
