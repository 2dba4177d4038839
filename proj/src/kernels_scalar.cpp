// Scalar reference kernels.  The 4-way striped accumulation order here is the
// contract every SIMD variant must reproduce exactly; see kernels.hpp.

#include "panelfx/kernels.hpp"

namespace panelfx::kernels::scalar {

namespace {

template <typename Term>
inline double reduce4(std::size_t n, Term term) {
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc[0] += term(i);
        acc[1] += term(i + 1);
        acc[2] += term(i + 2);
        acc[3] += term(i + 3);
    }
    for (; i < n; ++i) acc[i & 3] += term(i);
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

}  // namespace

double sum(std::span<const double> x) {
    const double* p = x.data();
    return reduce4(x.size(), [p](std::size_t i) { return p[i]; });
}

double sum_sq(std::span<const double> x) {
    const double* p = x.data();
    return reduce4(x.size(), [p](std::size_t i) { return p[i] * p[i]; });
}

double dot(std::span<const double> x, std::span<const double> y) {
    const double* a = x.data();
    const double* b = y.data();
    return reduce4(x.size(), [a, b](std::size_t i) { return a[i] * b[i]; });
}

double weighted_sum(std::span<const double> w, std::span<const double> x) {
    const double* a = w.data();
    const double* b = x.data();
    return reduce4(w.size(), [a, b](std::size_t i) { return a[i] * b[i]; });
}

double weighted_dot(std::span<const double> w, std::span<const double> x,
                    std::span<const double> y) {
    const double* a = w.data();
    const double* b = x.data();
    const double* c = y.data();
    return reduce4(w.size(),
                   [a, b, c](std::size_t i) { return (a[i] * b[i]) * c[i]; });
}

}  // namespace panelfx::kernels::scalar
