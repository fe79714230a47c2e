#include "pedflow/kernels.hpp"

namespace pedflow::kernels::detail {
const KernelTable* avx2_table() noexcept { return nullptr; }
}  // namespace pedflow::kernels::detail
