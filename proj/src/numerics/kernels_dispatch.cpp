#include <cstdlib>
#include <string_view>

#include "dsbf/numerics/kernels.hpp"

namespace dsbf::kernels {

const KernelTable* simd_table() noexcept {
  if (const KernelTable* t = detail::avx2_table()) return t;
  return detail::neon_table();
}

const KernelTable& active() noexcept {
  static const KernelTable& table = []() -> const KernelTable& {
    const char* env = std::getenv("DSBF_SIMD");
    if (env != nullptr && std::string_view(env) == "scalar") return scalar_table();
    if (const KernelTable* t = simd_table()) return *t;
    return scalar_table();
  }();
  return table;
}

}  // namespace dsbf::kernels
