#include <cstdlib>
#include <string>

#include "rhm/errors.hpp"
#include "rhm/kernels.hpp"

namespace rhm::kern {

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

const Kernels* select() {
  const char* env = std::getenv("RHM_KERNELS");
  std::string choice = env ? env : "auto";
  if (choice == "scalar") return &scalar_kernels();
  if (choice == "avx2") {
    const Kernels* table = avx2_kernels();
    if (!table || !avx2_supported())
      throw ConfigError("RHM_KERNELS=avx2 requested but AVX2 is unavailable");
    return table;
  }
  if (choice != "auto")
    throw ConfigError("RHM_KERNELS must be scalar, avx2, or auto (got '" + choice + "')");
  const Kernels* table = avx2_kernels();
  return (table && avx2_supported()) ? table : &scalar_kernels();
}

}  // namespace

const Kernels& active() {
  static const Kernels* table = select();
  return *table;
}

}  // namespace rhm::kern
