#include "pedflow/error.hpp"
#include "pedflow/kernels.hpp"

namespace pedflow::kernels {

bool avx2_available() noexcept {
#if defined(__x86_64__) || defined(__i386__)
  static const bool ok = detail::avx2_table() != nullptr && __builtin_cpu_supports("avx2") &&
                         __builtin_cpu_supports("fma");
  return ok;
#else
  return false;
#endif
}

namespace detail {
namespace {
const KernelTable* pick_default() noexcept {
  return avx2_available() ? avx2_table() : &scalar_table();
}
}  // namespace
const KernelTable* g_active = pick_default();
}  // namespace detail

Backend active_backend() noexcept {
  return detail::g_active == &detail::scalar_table() ? Backend::Scalar : Backend::Avx2;
}

const char* backend_name(Backend backend) noexcept {
  return backend == Backend::Scalar ? "scalar" : "avx2";
}

const KernelTable& table(Backend backend) {
  if (backend == Backend::Scalar) return detail::scalar_table();
  if (!avx2_available()) throw Error(ErrorCode::InvalidConfig, "avx2 kernels unavailable on this CPU");
  return *detail::avx2_table();
}

void set_backend(Backend backend) { detail::g_active = &table(backend); }

}  // namespace pedflow::kernels
