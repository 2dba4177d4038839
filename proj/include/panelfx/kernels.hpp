#pragma once

// =============================================================================
// kernels: data-parallel reduction primitives behind the estimators
// =============================================================================
// Every hot loop in the library (likelihood accumulation, Gram matrices,
// moment sums) funnels through these five reductions.  Two implementations
// exist: a scalar reference and an AVX2 variant, selected once at startup by
// CPU feature detection.  Both follow the same 4-way striped accumulation
// contract so their results are bit-identical:
//
//   acc[j] collects terms j, j+4, j+8, ...   (j = 0..3, in index order)
//   result = (acc[0] + acc[1]) + (acc[2] + acc[3])
//
// Per-term arithmetic is fixed as written below (no FMA contraction; the
// kernel translation units are compiled with -ffp-contract=off).  The
// environment variable PANELFX_KERNELS=scalar|avx2 overrides dispatch.
// =============================================================================

#include <cstddef>
#include <span>

namespace panelfx::kernels {

enum class Variant { scalar, avx2 };

// Variant chosen by dispatch (CPU detection + env override), resolved once.
Variant active();
const char* variant_name(Variant v);

// True if the AVX2 variant was compiled in and the CPU supports it.
bool avx2_available();

// --- dispatched entry points -------------------------------------------------

// sum_i x[i]
double sum(std::span<const double> x);
// sum_i x[i]^2
double sum_sq(std::span<const double> x);
// sum_i x[i]*y[i]
double dot(std::span<const double> x, std::span<const double> y);
// sum_i w[i]*x[i]
double weighted_sum(std::span<const double> w, std::span<const double> x);
// sum_i (w[i]*x[i])*y[i]
double weighted_dot(std::span<const double> w, std::span<const double> x,
                    std::span<const double> y);

// --- direct entry points (equivalence tests) ---------------------------------

namespace scalar {
double sum(std::span<const double> x);
double sum_sq(std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);
double weighted_sum(std::span<const double> w, std::span<const double> x);
double weighted_dot(std::span<const double> w, std::span<const double> x,
                    std::span<const double> y);
}  // namespace scalar

namespace avx2 {
// Defined only when PANELFX_ENABLE_AVX2; calling them on a CPU without AVX2
// is undefined.  Guard with avx2_available().
double sum(std::span<const double> x);
double sum_sq(std::span<const double> x);
double dot(std::span<const double> x, std::span<const double> y);
double weighted_sum(std::span<const double> w, std::span<const double> x);
double weighted_dot(std::span<const double> w, std::span<const double> x,
                    std::span<const double> y);
}  // namespace avx2

}  // namespace panelfx::kernels
