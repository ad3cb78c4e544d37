#include <atomic>
#include <cstdlib>
#include <string>

#include "kernels_impl.hpp"
#include "mopro/error.hpp"

namespace mopro::numkit::kernels {
namespace {

const KernelTable* detect() {
  if (const char* env = std::getenv("MOPRO_SIMD"); env && std::string(env) == "scalar") {
    return &scalar_table();
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{detect()};
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

const KernelTable& scalar_table() { return scalar::table; }

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

const KernelTable* avx2_table() {
#if defined(MOPRO_HAVE_AVX2)
  if (cpu_supports_avx2()) return &avx2::table;
#endif
  return nullptr;
}

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void select(Isa isa) {
  const KernelTable* table = isa == Isa::Scalar ? &scalar_table() : avx2_table();
  if (!table) {
    throw StateError("kernel ISA '" + std::string(isa_name(isa)) + "' is not available");
  }
  current().store(table, std::memory_order_release);
}

}  // namespace mopro::numkit::kernels
