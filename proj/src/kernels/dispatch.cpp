#include "tcm/kernels/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace tcm::kernels {

const KernelTable* avx2_table_if_compiled();

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* initial_choice() {
  const KernelTable* avx2 = avx2_table();
  if (const char* env = std::getenv("TCM_KERNELS")) {
    const std::string want = env;
    if (want == "scalar") return &scalar_table();
    if (want == "avx2" && avx2 != nullptr) return avx2;
  }
  return avx2 != nullptr ? avx2 : &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial_choice()};
  return table;
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable* table =
      cpu_has_avx2() ? avx2_table_if_compiled() : nullptr;
  return table;
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool select(std::string_view name) {
  if (name == "scalar") {
    current().store(&scalar_table());
    return true;
  }
  if (name == "avx2" && avx2_table() != nullptr) {
    current().store(avx2_table());
    return true;
  }
  return false;
}

}  // namespace tcm::kernels
