// AVX2 kernel variant.  One __m256d register holds the four striped
// accumulators of the reduction contract; the tail (n % 4 trailing elements)
// is folded into the matching lanes before the fixed final combine, so the
// result is bit-identical to the scalar reference.  No FMA: mul and add stay
// separate instructions, matching scalar arithmetic exactly.

#include "panelfx/kernels.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

namespace panelfx::kernels::avx2 {

namespace {

inline double finish(__m256d acc, std::size_t n4, std::size_t n,
                     const double* tail_terms) {
    alignas(32) double lanes[4];
    _mm256_store_pd(lanes, acc);
    for (std::size_t i = n4; i < n; ++i) lanes[i & 3] += tail_terms[i - n4];
    return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}

}  // namespace

double sum(std::span<const double> x) {
    const double* p = x.data();
    const std::size_t n = x.size(), n4 = n & ~std::size_t{3};
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t i = 0; i < n4; i += 4)
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(p + i));
    double tail[3];
    for (std::size_t i = n4; i < n; ++i) tail[i - n4] = p[i];
    return finish(acc, n4, n, tail);
}

double sum_sq(std::span<const double> x) {
    const double* p = x.data();
    const std::size_t n = x.size(), n4 = n & ~std::size_t{3};
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t i = 0; i < n4; i += 4) {
        __m256d v = _mm256_loadu_pd(p + i);
        acc = _mm256_add_pd(acc, _mm256_mul_pd(v, v));
    }
    double tail[3];
    for (std::size_t i = n4; i < n; ++i) tail[i - n4] = p[i] * p[i];
    return finish(acc, n4, n, tail);
}

double dot(std::span<const double> x, std::span<const double> y) {
    const double* a = x.data();
    const double* b = y.data();
    const std::size_t n = x.size(), n4 = n & ~std::size_t{3};
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t i = 0; i < n4; i += 4)
        acc = _mm256_add_pd(
            acc, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    double tail[3];
    for (std::size_t i = n4; i < n; ++i) tail[i - n4] = a[i] * b[i];
    return finish(acc, n4, n, tail);
}

double weighted_sum(std::span<const double> w, std::span<const double> x) {
    return dot(w, x);
}

double weighted_dot(std::span<const double> w, std::span<const double> x,
                    std::span<const double> y) {
    const double* a = w.data();
    const double* b = x.data();
    const double* c = y.data();
    const std::size_t n = w.size(), n4 = n & ~std::size_t{3};
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t i = 0; i < n4; i += 4) {
        __m256d wx = _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i));
        acc = _mm256_add_pd(acc, _mm256_mul_pd(wx, _mm256_loadu_pd(c + i)));
    }
    double tail[3];
    for (std::size_t i = n4; i < n; ++i) tail[i - n4] = (a[i] * b[i]) * c[i];
    return finish(acc, n4, n, tail);
}

}  // namespace panelfx::kernels::avx2

#else  // !__AVX2__

// Variant not built: keep the symbols defined so callers can link; dispatch
// never selects them (avx2_available() is false).

namespace panelfx::kernels::avx2 {

double sum(std::span<const double> x) { return scalar::sum(x); }
double sum_sq(std::span<const double> x) { return scalar::sum_sq(x); }
double dot(std::span<const double> x, std::span<const double> y) {
    return scalar::dot(x, y);
}
double weighted_sum(std::span<const double> w, std::span<const double> x) {
    return scalar::weighted_sum(w, x);
}
double weighted_dot(std::span<const double> w, std::span<const double> x,
                    std::span<const double> y) {
    return scalar::weighted_dot(w, x, y);
}

}  // namespace panelfx::kernels::avx2

#endif  // __AVX2__
