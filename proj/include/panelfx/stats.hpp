#pragma once

// Shared statistical primitives: normal and Student-t special functions,
// order-statistic quantiles, sample moments, and the Welch two-sample test
// (optionally weighted, using Kish effective sample sizes).

#include <optional>
#include <span>
#include <vector>

namespace panelfx::stats {

inline constexpr double kSqrt2 = 1.4142135623730950488;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;

double norm_pdf(double x);
double norm_logpdf(double x);
double norm_cdf(double x);
// Accurate in the deep lower tail (x down to about -1e7).
double norm_logcdf(double x);
// phi(x)/Phi(x), computed in log space so it survives x << 0.
double inverse_mills(double x);
// Inverse of norm_cdf on (0,1); ~1 ulp after one Halley refinement.
double norm_quantile(double p);

// Upper-tail probability P(T > t) for Student-t with df degrees of freedom.
double student_t_sf(double t, double df);

// Regularized incomplete beta I_x(a, b) via Lentz continued fraction.
double incomplete_beta(double a, double b, double x);

// Type-7 quantile (linear interpolation between order statistics) on sorted
// data; p in [0,1].
double quantile_sorted(std::span<const double> sorted, double p);

// Weighted generalization of the type-7 rule.  Each sorted value x_k with
// cumulative weight C_k gets plotting position (C_k - w_k) / (W - w_k);
// the quantile interpolates linearly between adjacent positions.  Unit
// weights reproduce quantile_sorted exactly.
double weighted_quantile_sorted(std::span<const double> sorted,
                                std::span<const double> weights, double p);

struct Moments {
    std::size_t n = 0;
    double mean = 0.0;
    double sd = 0.0;        // sample sd, n-1 denominator
    double skewness = 0.0;  // m3 / m2^1.5, population moments
    double kurtosis = 0.0;  // m4 / m2^2, not excess
    bool degenerate = false;  // m2 == 0: skewness/kurtosis undefined
};
Moments moments(std::span<const double> values);

struct WeightedSample {
    double mean = 0.0;
    double var = 0.0;    // reliability-weighted sample variance
    double n_eff = 0.0;  // Kish effective size (sum w)^2 / sum w^2
    double sum_w = 0.0;
};
WeightedSample weighted_sample(std::span<const double> values,
                               std::span<const double> weights);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 1.0;  // two-sided
};
// Welch two-sample test from summary statistics (n may be an effective size).
WelchResult welch_from_summary(double mean1, double var1, double n1,
                               double mean2, double var2, double n2);
WelchResult welch_test(std::span<const double> a, std::span<const double> b);

}  // namespace panelfx::stats
