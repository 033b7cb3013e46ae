// AVX2+FMA variants of the dense kernels.  This translation unit is the only
// one compiled with -mavx2 -mfma; whether it is used is decided at runtime.

#include "difflab/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)

#include <immintrin.h>

#include <cmath>

namespace difflab::kernels {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d swapped = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d yv = _mm256_loadu_pd(y + i);
    yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
    _mm256_storeu_pd(y + i, yv);
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void lincomb_avx2(double a, const double* x, double b, const double* y,
                  double* out, std::size_t n) {
  const __m256d av = _mm256_set1_pd(a);
  const __m256d bv = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d r = _mm256_mul_pd(bv, _mm256_loadu_pd(y + i));
    r = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), r);
    _mm256_storeu_pd(out + i, r);
  }
  for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void matvec_avx2(const double* w, const double* x, double* y,
                 std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    y[r] = dot_avx2(w + r * cols, x, cols);
  }
}

void matvec_t_avx2(const double* w, const double* x, double* y,
                   std::size_t rows, std::size_t cols) {
  std::size_t c = 0;
  for (; c + 4 <= cols; c += 4) _mm256_storeu_pd(y + c, _mm256_setzero_pd());
  for (; c < cols; ++c) y[c] = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    axpy_avx2(x[r], w + r * cols, y, cols);
  }
}

void ger_avx2(double* a_mat, double a, const double* x, const double* y,
              std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    axpy_avx2(a * x[r], y, a_mat + r * cols, cols);
  }
}

double sumsq_avx2(const double* x, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    acc = _mm256_fmadd_pd(v, v, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += x[i] * x[i];
  return s;
}

void adam_avx2(double* w, double* m, double* v, const double* g, std::size_t n,
               double lr, double b1, double b2, double eps, double inv_bc1,
               double inv_bc2) {
  const __m256d b1v = _mm256_set1_pd(b1);
  const __m256d b2v = _mm256_set1_pd(b2);
  const __m256d ob1 = _mm256_set1_pd(1.0 - b1);
  const __m256d ob2 = _mm256_set1_pd(1.0 - b2);
  const __m256d lrv = _mm256_set1_pd(lr);
  const __m256d epsv = _mm256_set1_pd(eps);
  const __m256d c1 = _mm256_set1_pd(inv_bc1);
  const __m256d c2 = _mm256_set1_pd(inv_bc2);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    __m256d mv = _mm256_loadu_pd(m + i);
    __m256d vv = _mm256_loadu_pd(v + i);
    mv = _mm256_fmadd_pd(b1v, mv, _mm256_mul_pd(ob1, gv));
    vv = _mm256_fmadd_pd(b2v, vv, _mm256_mul_pd(ob2, _mm256_mul_pd(gv, gv)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d mhat = _mm256_mul_pd(mv, c1);
    const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vv, c2)), epsv);
    __m256d wv = _mm256_loadu_pd(w + i);
    wv = _mm256_sub_pd(wv, _mm256_div_pd(_mm256_mul_pd(lrv, mhat), denom));
    _mm256_storeu_pd(w + i, wv);
  }
  for (; i < n; ++i) {
    m[i] = b1 * m[i] + (1.0 - b1) * g[i];
    v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
    w[i] -= lr * (m[i] * inv_bc1) / (std::sqrt(v[i] * inv_bc2) + eps);
  }
}

constexpr Backend kAvx2 = {
    "avx2",        dot_avx2, axpy_avx2,  lincomb_avx2, matvec_avx2,
    matvec_t_avx2, ger_avx2, sumsq_avx2, adam_avx2,
};

bool cpu_has_avx2_fma() {
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

}  // namespace

const Backend* avx2_backend() {
  static const bool ok = cpu_has_avx2_fma();
  return ok ? &kAvx2 : nullptr;
}

}  // namespace difflab::kernels

#endif  // x86-64
