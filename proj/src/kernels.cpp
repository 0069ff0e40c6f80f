#include <atomic>
#include <cstdlib>
#include <cstring>

#include "gridrl/kernels.hpp"

namespace gridrl::kern {

// Defined in kernels_avx2.cpp; falls back to the scalar set when the AVX2
// translation unit was not compiled for this target.
const Kernels& avx2_impl_kernels();

bool cpu_has_avx2() {
#if defined(__x86_64__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Kernels& avx2_kernels() {
    if (!cpu_has_avx2()) return scalar_kernels();
    return avx2_impl_kernels();
}

namespace {

std::atomic<KernelMode> g_mode{KernelMode::Auto};

KernelMode mode_from_env() {
    const char* v = std::getenv("GRIDRL_KERNELS");
    if (!v) return KernelMode::Auto;
    if (std::strcmp(v, "scalar") == 0) return KernelMode::Scalar;
    if (std::strcmp(v, "avx2") == 0) return KernelMode::Avx2;
    return KernelMode::Auto;
}

struct EnvInit {
    EnvInit() { g_mode.store(mode_from_env()); }
};
EnvInit g_env_init;

}  // namespace

void set_kernel_mode(KernelMode mode) { g_mode.store(mode); }

KernelMode kernel_mode() { return g_mode.load(); }

const Kernels& active() {
    switch (g_mode.load()) {
        case KernelMode::Scalar:
            return scalar_kernels();
        case KernelMode::Avx2:
            return avx2_kernels();
        case KernelMode::Auto:
        default:
            return cpu_has_avx2() ? avx2_kernels() : scalar_kernels();
    }
}

}  // namespace gridrl::kern
