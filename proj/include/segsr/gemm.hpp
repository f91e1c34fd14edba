#pragma once

#include <cstdint>

namespace segsr {

// C[M,N] = alpha * op(A) * op(B) + beta * C, row-major.
// op(A) is A[M,K] when !trans_a, else A is stored [K,M] and used transposed;
// op(B) is B[K,N] when !trans_b, else B is stored [N,K].
// Backed by OpenBLAS when available (single-threaded for determinism),
// otherwise a blocked fallback kernel.
void gemm(int M, int N, int K, float alpha, const float* A, bool trans_a, const float* B,
          bool trans_b, float beta, float* C);
void gemm(int M, int N, int K, double alpha, const double* A, bool trans_a, const double* B,
          bool trans_b, double beta, double* C);

}  // namespace segsr
