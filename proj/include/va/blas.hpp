#pragma once

#include <cstddef>

namespace va::blas {

// Row-major C = alpha * op(A) * op(B) + beta * C.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc);

// y = alpha * op(A) * x + beta * y, row-major A of size m x n.
void gemv(bool trans, int m, int n, float alpha, const float* a, int lda, const float* x,
          float beta, float* y);
void gemv(bool trans, int m, int n, double alpha, const double* a, int lda, const double* x,
          double beta, double* y);

// Pins the backend to one thread so seeded runs are bit-reproducible.
void use_single_thread();

}  // namespace va::blas
