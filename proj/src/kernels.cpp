#include "cenet/kernels.hpp"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

#if defined(__x86_64__) || defined(_M_X64)
#define CENET_X86 1
#include <immintrin.h>
#else
#define CENET_X86 0
#endif

namespace cenet::kernels {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * x[i];
}

void adam_scalar(double* w, const double* g, double* m, double* v,
                 std::size_t n, double lr, double beta1, double beta2,
                 double eps, double c1, double c2) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

#if CENET_X86

__attribute__((target("avx2,fma"))) double dot_avx2(const double* a,
                                                    const double* b,
                                                    std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                           acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  acc0 = _mm256_add_pd(acc0, acc1);
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i),
                           acc0);
  }
  __m128d lo = _mm256_castpd256_pd128(acc0);
  __m128d hi = _mm256_extractf128_pd(acc0, 1);
  lo = _mm_add_pd(lo, hi);
  double sum = _mm_cvtsd_f64(lo) + _mm_cvtsd_f64(_mm_unpackhi_pd(lo, lo));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

__attribute__((target("avx2,fma"))) void axpy_avx2(double alpha,
                                                   const double* x, double* y,
                                                   std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d vy = _mm256_loadu_pd(y + i);
    vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
    _mm256_storeu_pd(y + i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

__attribute__((target("avx2,fma"))) void scale_avx2(double alpha,
                                                    const double* x, double* y,
                                                    std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) y[i] = alpha * x[i];
}

__attribute__((target("avx2,fma"))) void adam_avx2(double* w, const double* g,
                                                   double* m, double* v,
                                                   std::size_t n, double lr,
                                                   double beta1, double beta2,
                                                   double eps, double c1,
                                                   double c2) {
  const __m256d vb1 = _mm256_set1_pd(beta1);
  const __m256d vb2 = _mm256_set1_pd(beta2);
  const __m256d vomb1 = _mm256_set1_pd(1.0 - beta1);
  const __m256d vomb2 = _mm256_set1_pd(1.0 - beta2);
  const __m256d vlr = _mm256_set1_pd(lr);
  const __m256d veps = _mm256_set1_pd(eps);
  const __m256d vc1 = _mm256_set1_pd(c1);
  const __m256d vc2 = _mm256_set1_pd(c2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d vg = _mm256_loadu_pd(g + i);
    __m256d vm = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    vm = _mm256_fmadd_pd(vomb1, vg, _mm256_mul_pd(vb1, vm));
    vv = _mm256_fmadd_pd(vomb2, _mm256_mul_pd(vg, vg), _mm256_mul_pd(vb2, vv));
    _mm256_storeu_pd(m + i, vm);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_div_pd(vm, vc1);
    const __m256d vhat = _mm256_div_pd(vv, vc2);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
    __m256d vw = _mm256_loadu_pd(w + i);
    vw = _mm256_sub_pd(vw, _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom));
    _mm256_storeu_pd(w + i, vw);
  }
  if (i < n) {
    adam_scalar(w + i, g + i, m + i, v + i, n - i, lr, beta1, beta2, eps, c1,
                c2);
  }
}

#endif  // CENET_X86

const Kernels kScalar = {"scalar", dot_scalar, axpy_scalar, scale_scalar,
                         adam_scalar};

#if CENET_X86
const Kernels kAvx2 = {"avx2", dot_avx2, axpy_avx2, scale_avx2, adam_avx2};
#endif

const Kernels& select() {
  const char* force = std::getenv("CENET_KERNELS");
  if (force != nullptr) {
    const std::string s(force);
    if (s == "scalar") return kScalar;
    if (s == "avx2") {
      if (!avx2_available())
        throw std::runtime_error("CENET_KERNELS=avx2 but CPU lacks AVX2");
      return avx2_kernels();
    }
    throw std::runtime_error("unknown CENET_KERNELS value: " + s);
  }
  if (avx2_available()) return avx2_kernels();
  return kScalar;
}

}  // namespace

const Kernels& scalar_kernels() { return kScalar; }

bool avx2_available() {
#if CENET_X86
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const Kernels& avx2_kernels() {
#if CENET_X86
  return kAvx2;
#else
  throw std::runtime_error("AVX2 kernels not built on this architecture");
#endif
}

const Kernels& active() {
  static const Kernels& k = select();
  return k;
}

void matmul_nt(const double* a, const double* b, double* c, std::size_t m,
               std::size_t n, std::size_t k) {
  const auto& kk = active();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = kk.dot(ai, b + j * k, k);
  }
}

void matmul_nn_acc(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t n, std::size_t k) {
  const auto& kk = active();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      if (ai[l] != 0.0) kk.axpy(ai[l], b + l * n, ci, n);
    }
  }
}

void matmul_tn_acc(const double* a, const double* b, double* c, std::size_t m,
                   std::size_t n, std::size_t k) {
  const auto& kk = active();
  for (std::size_t l = 0; l < k; ++l) {
    const double* al = a + l * m;
    const double* bl = b + l * n;
    for (std::size_t i = 0; i < m; ++i) {
      if (al[i] != 0.0) kk.axpy(al[i], bl, c + i * n, n);
    }
  }
}

}  // namespace cenet::kernels
