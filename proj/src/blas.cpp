#include "va/blas.hpp"

#if __has_include(<cblas-openblas.h>)
#include <cblas-openblas.h>
#elif __has_include(<cblas.h>)
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#else
#error "cblas header not found"
#endif

namespace va::blas {

void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
    cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

void gemv(bool trans, int m, int n, float alpha, const float* a, int lda, const float* x,
          float beta, float* y) {
    cblas_sgemv(CblasRowMajor, trans ? CblasTrans : CblasNoTrans, m, n, alpha, a, lda, x, 1, beta,
                y, 1);
}

void gemv(bool trans, int m, int n, double alpha, const double* a, int lda, const double* x,
          double beta, double* y) {
    cblas_dgemv(CblasRowMajor, trans ? CblasTrans : CblasNoTrans, m, n, alpha, a, lda, x, 1, beta,
                y, 1);
}

void use_single_thread() { openblas_set_num_threads(1); }

}  // namespace va::blas
