#include <atomic>
#include <cstdlib>
#include <string>

#include "fam/simd/kernels.hpp"

namespace fam::simd {
namespace {

const KernelTable* best_available() {
  if (const KernelTable* t = avx2_kernels()) return t;
  if (const KernelTable* t = neon_kernels()) return t;
  return &scalar_kernels();
}

const KernelTable* by_name(std::string_view name) {
  if (name == "scalar") return &scalar_kernels();
  if (name == "avx2") return avx2_kernels();
  if (name == "neon") return neon_kernels();
  if (name == "auto" || name.empty()) return best_available();
  return nullptr;
}

const KernelTable* initial() {
  if (const char* env = std::getenv("FAM_SIMD")) {
    if (const KernelTable* t = by_name(env)) return t;
  }
  return best_available();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{initial()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

bool select(std::string_view name) {
  const KernelTable* t = by_name(name);
  if (!t) return false;
  current().store(t, std::memory_order_release);
  return true;
}

}  // namespace fam::simd
