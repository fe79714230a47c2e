#pragma once

#include <cstddef>
#include <span>

// Dense double-precision kernels used by the network and the trainer. Each
// kernel has a scalar reference implementation and an AVX2/FMA variant; the
// variant is chosen once at startup from CPUID and can be overridden.

namespace pedflow::kernels {

enum class Backend { Scalar, Avx2 };

struct AdamCoeffs {
  double beta1;
  double beta2;
  double step_size;        // lr / (1 - beta1^t)
  double inv_sqrt_bias2;   // 1 / sqrt(1 - beta2^t)
  double eps;
};

/// Function table for one backend. Matrices are row-major.
struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  /// y += W x
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y);
  /// x_grad += W^T g
  void (*gemv_t)(const double* w, std::size_t rows, std::size_t cols, const double* g, double* x_grad);
  /// W += g x^T
  void (*ger)(double* w, std::size_t rows, std::size_t cols, const double* g, const double* x);
  void (*adam)(double* param, const double* grad, double* m, double* v, std::size_t n,
               const AdamCoeffs& c);
};

bool avx2_available() noexcept;
Backend active_backend() noexcept;
/// Throws Error(InvalidConfig) when the backend is not supported on this CPU.
void set_backend(Backend backend);
const char* backend_name(Backend backend) noexcept;
const KernelTable& table(Backend backend);

namespace detail {
extern const KernelTable* g_active;
const KernelTable& scalar_table() noexcept;
const KernelTable* avx2_table() noexcept;  // nullptr when not compiled in
}  // namespace detail

inline double dot(std::span<const double> a, std::span<const double> b) {
  return detail::g_active->dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  detail::g_active->axpy(alpha, x.data(), y.data(), x.size());
}
inline void gemv(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
  detail::g_active->gemv(w, rows, cols, x, y);
}
inline void gemv_t(const double* w, std::size_t rows, std::size_t cols, const double* g, double* xg) {
  detail::g_active->gemv_t(w, rows, cols, g, xg);
}
inline void ger(double* w, std::size_t rows, std::size_t cols, const double* g, const double* x) {
  detail::g_active->ger(w, rows, cols, g, x);
}
inline void adam(std::span<double> param, std::span<const double> grad, std::span<double> m,
                 std::span<double> v, const AdamCoeffs& c) {
  detail::g_active->adam(param.data(), grad.data(), m.data(), v.data(), param.size(), c);
}

}  // namespace pedflow::kernels
