#pragma once

#include <cstdint>

namespace df::kernels {

// Worker cap, from DENSFIELD_THREADS (default: hardware concurrency, max 8).
int thread_cap();

// C[m,n] += A[m,k] * B[k,n], row-major.
void matmul_nn(const double* A, const double* B, double* C, int m, int k, int n);
// C[m,n] += A[k,m]^T * B[k,n]
void matmul_tn(const double* A, const double* B, double* C, int m, int k, int n);
// C[m,n] += A[m,k] * B[n,k]^T
void matmul_nt(const double* A, const double* B, double* C, int m, int k, int n);

// Patch extraction for 3x3-style convolution, zero padding.
// in: [c,h,w] -> cols: [c*kh*kw, ho*wo]
void im2col(const double* in, int c, int h, int w, int kh, int kw, int stride,
            int pad, int ho, int wo, double* cols);
// Transpose of im2col: scatter-add cols back into the input layout.
void col2im(const double* cols, int c, int h, int w, int kh, int kw, int stride,
            int pad, int ho, int wo, double* in_grad);

}  // namespace df::kernels
