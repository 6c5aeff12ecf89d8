#pragma once

#include <cstddef>

// Double-precision inner-loop kernels. A scalar reference implementation is
// always available; an AVX2/FMA variant is selected at runtime when the CPU
// supports it. Set CENET_KERNELS=scalar|avx2 to force a backend.

namespace cenet::kernels {

struct Kernels {
  const char* name;
  // sum_i a[i]*b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y[i] = alpha * x[i]
  void (*scale)(double alpha, const double* x, double* y, std::size_t n);
  // fused Adam update over a flat parameter block; m/v are the biased
  // moments, c1/c2 the bias-correction denominators for the current step
  void (*adam)(double* w, const double* g, double* m, double* v,
               std::size_t n, double lr, double beta1, double beta2,
               double eps, double c1, double c2);
};

const Kernels& scalar_kernels();
bool avx2_available();
const Kernels& avx2_kernels();  // valid only if avx2_available()

// Backend chosen at first call (env override, then CPU probe).
const Kernels& active();

// C[m×n] = A[m×k] · B[n×k]^T
void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t n, std::size_t k);
// C[m×n] += A[m×k] · B[k×n]
void matmul_nn_acc(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t n, std::size_t k);
// C[m×n] += A[k×m]^T · B[k×n]
void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t n, std::size_t k);

}  // namespace cenet::kernels
