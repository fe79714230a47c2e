#include <cmath>

#include "pedflow/kernels.hpp"

namespace pedflow::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_scalar(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot_scalar(w + r * cols, x, cols);
}

void gemv_t_scalar(const double* w, std::size_t rows, std::size_t cols, const double* g,
                   double* xg) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] != 0.0) axpy_scalar(g[r], w + r * cols, xg, cols);
  }
}

void ger_scalar(double* w, std::size_t rows, std::size_t cols, const double* g, const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] != 0.0) axpy_scalar(g[r], x, w + r * cols, cols);
  }
}

void adam_scalar(double* p, const double* g, double* m, double* v, std::size_t n,
                 const AdamCoeffs& c) {
  const double one_m_b1 = 1.0 - c.beta1;
  const double one_m_b2 = 1.0 - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = c.beta1 * m[i] + one_m_b1 * g[i];
    v[i] = c.beta2 * v[i] + one_m_b2 * (g[i] * g[i]);
    const double denom = std::sqrt(v[i]) * c.inv_sqrt_bias2 + c.eps;
    p[i] -= c.step_size * (m[i] / denom);
  }
}

constexpr KernelTable kScalar{dot_scalar, axpy_scalar, gemv_scalar,
                              gemv_t_scalar, ger_scalar, adam_scalar};

}  // namespace

namespace detail {
const KernelTable& scalar_table() noexcept { return kScalar; }
}  // namespace detail

}  // namespace pedflow::kernels
