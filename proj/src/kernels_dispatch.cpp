// Runtime kernel dispatch: pick the widest variant the CPU supports, unless
// PANELFX_KERNELS pins one explicitly.

#include "panelfx/kernels.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace panelfx::kernels {

namespace {

struct Table {
    Variant variant;
    double (*sum)(std::span<const double>);
    double (*sum_sq)(std::span<const double>);
    double (*dot)(std::span<const double>, std::span<const double>);
    double (*weighted_sum)(std::span<const double>, std::span<const double>);
    double (*weighted_dot)(std::span<const double>, std::span<const double>,
                           std::span<const double>);
};

constexpr Table kScalar{Variant::scalar,       scalar::sum,
                        scalar::sum_sq,        scalar::dot,
                        scalar::weighted_sum,  scalar::weighted_dot};

#if defined(PANELFX_HAVE_AVX2)
constexpr Table kAvx2{Variant::avx2,        avx2::sum,
                      avx2::sum_sq,         avx2::dot,
                      avx2::weighted_sum,   avx2::weighted_dot};
#endif

bool cpu_has_avx2() {
#if defined(PANELFX_HAVE_AVX2) && (defined(__x86_64__) || defined(_M_X64))
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

Table resolve() {
    const char* env = std::getenv("PANELFX_KERNELS");
    if (env != nullptr) {
        if (std::strcmp(env, "scalar") == 0) return kScalar;
#if defined(PANELFX_HAVE_AVX2)
        if (std::strcmp(env, "avx2") == 0) {
            if (cpu_has_avx2()) return kAvx2;
            std::fprintf(stderr,
                         "panelfx: PANELFX_KERNELS=avx2 requested but CPU lacks "
                         "AVX2, using scalar kernels\n");
            return kScalar;
        }
#endif
        std::fprintf(stderr, "panelfx: unknown PANELFX_KERNELS value '%s'\n", env);
    }
#if defined(PANELFX_HAVE_AVX2)
    if (cpu_has_avx2()) return kAvx2;
#endif
    return kScalar;
}

const Table& table() {
    static const Table t = resolve();
    return t;
}

}  // namespace

Variant active() { return table().variant; }

const char* variant_name(Variant v) {
    switch (v) {
        case Variant::scalar: return "scalar";
        case Variant::avx2: return "avx2";
    }
    return "?";
}

bool avx2_available() { return cpu_has_avx2(); }

double sum(std::span<const double> x) { return table().sum(x); }
double sum_sq(std::span<const double> x) { return table().sum_sq(x); }
double dot(std::span<const double> x, std::span<const double> y) {
    return table().dot(x, y);
}
double weighted_sum(std::span<const double> w, std::span<const double> x) {
    return table().weighted_sum(w, x);
}
double weighted_dot(std::span<const double> w, std::span<const double> x,
                    std::span<const double> y) {
    return table().weighted_dot(w, x, y);
}

}  // namespace panelfx::kernels
