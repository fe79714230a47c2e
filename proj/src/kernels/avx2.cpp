// Compiled with -mavx2 -mfma. Only reached after a CPUID check.
#include <immintrin.h>

#include <cmath>

#include "pedflow/kernels.hpp"

namespace pedflow::kernels {
namespace {

inline double hsum(__m256d v) {
  // Fixed reduction order: (v0 + v2) + (v1 + v3).
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    i += 4;
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_avx2(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot_avx2(w + r * cols, x, cols);
}

void gemv_t_avx2(const double* w, std::size_t rows, std::size_t cols, const double* g,
                 double* xg) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] != 0.0) axpy_avx2(g[r], w + r * cols, xg, cols);
  }
}

void ger_avx2(double* w, std::size_t rows, std::size_t cols, const double* g, const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] != 0.0) axpy_avx2(g[r], x, w + r * cols, cols);
  }
}

// Separate mul/add (no FMA) so the update is bitwise identical to the scalar one.
void adam_avx2(double* p, const double* g, double* m, double* v, std::size_t n,
               const AdamCoeffs& c) {
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d omb1 = _mm256_set1_pd(1.0 - c.beta1);
  const __m256d omb2 = _mm256_set1_pd(1.0 - c.beta2);
  const __m256d step = _mm256_set1_pd(c.step_size);
  const __m256d isb2 = _mm256_set1_pd(c.inv_sqrt_bias2);
  const __m256d eps = _mm256_set1_pd(c.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gi = _mm256_loadu_pd(g + i);
    const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)), _mm256_mul_pd(omb1, gi));
    const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(omb2, _mm256_mul_pd(gi, gi)));
    _mm256_storeu_pd(m + i, mi);
    _mm256_storeu_pd(v + i, vi);
    const __m256d denom = _mm256_add_pd(_mm256_mul_pd(_mm256_sqrt_pd(vi), isb2), eps);
    const __m256d upd = _mm256_mul_pd(step, _mm256_div_pd(mi, denom));
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), upd));
  }
  const double one_m_b1 = 1.0 - c.beta1;
  const double one_m_b2 = 1.0 - c.beta2;
  for (; i < n; ++i) {
    m[i] = c.beta1 * m[i] + one_m_b1 * g[i];
    v[i] = c.beta2 * v[i] + one_m_b2 * (g[i] * g[i]);
    const double denom = std::sqrt(v[i]) * c.inv_sqrt_bias2 + c.eps;
    p[i] -= c.step_size * (m[i] / denom);
  }
}

constexpr KernelTable kAvx2{dot_avx2, axpy_avx2, gemv_avx2, gemv_t_avx2, ger_avx2, adam_avx2};

}  // namespace

namespace detail {
const KernelTable* avx2_table() noexcept { return &kAvx2; }
}  // namespace detail

}  // namespace pedflow::kernels
