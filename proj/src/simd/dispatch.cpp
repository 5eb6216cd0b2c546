#include "mrf/simd.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace mrf::simd {

std::string_view isa_name(Isa isa) {
    switch (isa) {
        case Isa::Scalar: return "scalar";
        case Isa::Avx2: return "avx2";
    }
    return "unknown";
}

bool RfMatrix::is_real() const {
    for (double v : im)
        if (v != 0.0) return false;
    return true;
}

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2");
#else
    return false;
#endif
}

namespace {

const KernelTable* detect() {
    const char* forced = std::getenv("MRF_SIMD");
    if (forced != nullptr && std::string(forced) == "scalar") return &scalar_kernels();
    if (cpu_has_avx2() && avx2_kernels() != nullptr) return avx2_kernels();
    return &scalar_kernels();
}

std::atomic<const KernelTable*>& active() {
    static std::atomic<const KernelTable*> table{detect()};
    return table;
}

}  // namespace

const KernelTable& kernels() { return *active().load(std::memory_order_acquire); }

void select(Isa isa) {
    if (isa == Isa::Avx2 && cpu_has_avx2() && avx2_kernels() != nullptr)
        active().store(avx2_kernels(), std::memory_order_release);
    else
        active().store(&scalar_kernels(), std::memory_order_release);
}

}  // namespace mrf::simd
