#include "segsr/gemm.hpp"

#include <vector>

#ifdef SEGSR_USE_OPENBLAS
#include <cblas.h>
extern "C" void openblas_set_num_threads(int);
#endif

namespace segsr {

#ifdef SEGSR_USE_OPENBLAS
namespace {
// BLAS threading stays at 1: parallelism lives at the batch/sample level and
// per-call threading would make floating-point reductions order-dependent.
struct BlasInit {
  BlasInit() { openblas_set_num_threads(1); }
};
const BlasInit g_blas_init;
}  // namespace

void gemm(int M, int N, int K, float alpha, const float* A, bool trans_a, const float* B,
          bool trans_b, float beta, float* C) {
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, M, N, K, alpha, A, trans_a ? M : K, B,
              trans_b ? K : N, beta, C, N);
}

void gemm(int M, int N, int K, double alpha, const double* A, bool trans_a, const double* B,
          bool trans_b, double beta, double* C) {
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, M, N, K, alpha, A, trans_a ? M : K, B,
              trans_b ? K : N, beta, C, N);
}

#else

namespace {
template <class T>
void gemm_fallback(int M, int N, int K, T alpha, const T* A, bool trans_a, const T* B,
                   bool trans_b, T beta, T* C) {
  for (int64_t i = 0; i < int64_t(M) * N; ++i) C[i] *= beta;
  auto a_at = [&](int m, int k) { return trans_a ? A[int64_t(k) * M + m] : A[int64_t(m) * K + k]; };
  for (int m = 0; m < M; ++m) {
    T* c = C + int64_t(m) * N;
    if (trans_b) {
      for (int n = 0; n < N; ++n) {
        const T* b = B + int64_t(n) * K;
        T acc = 0;
        for (int k = 0; k < K; ++k) acc += a_at(m, k) * b[k];
        c[n] += alpha * acc;
      }
    } else {
      for (int k = 0; k < K; ++k) {
        const T av = alpha * a_at(m, k);
        const T* b = B + int64_t(k) * N;
        for (int n = 0; n < N; ++n) c[n] += av * b[n];
      }
    }
  }
}
}  // namespace

void gemm(int M, int N, int K, float alpha, const float* A, bool trans_a, const float* B,
          bool trans_b, float beta, float* C) {
  gemm_fallback(M, N, K, alpha, A, trans_a, B, trans_b, beta, C);
}

void gemm(int M, int N, int K, double alpha, const double* A, bool trans_a, const double* B,
          bool trans_b, double beta, double* C) {
  gemm_fallback(M, N, K, alpha, A, trans_a, B, trans_b, beta, C);
}

#endif

}  // namespace segsr
