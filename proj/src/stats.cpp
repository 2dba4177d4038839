#include "panelfx/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "panelfx/kernels.hpp"

namespace panelfx::stats {

namespace {
constexpr double kLogHalf = -0.69314718055994530942;
constexpr double kSqrtPi = 1.7724538509055160273;
}  // namespace

double norm_pdf(double x) { return kInvSqrt2Pi * std::exp(-0.5 * x * x); }

double norm_logpdf(double x) {
    return -0.5 * x * x - 0.91893853320467274178;  // -log(sqrt(2*pi))
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double norm_logcdf(double x) {
    if (x >= -1.0) {
        if (x > 6.0) {
            // log(1 - sf) with a tiny sf.
            return std::log1p(-0.5 * std::erfc(x / kSqrt2));
        }
        return std::log(0.5 * std::erfc(-x / kSqrt2));
    }
    const double z = -x / kSqrt2;
    if (z <= 25.0) {
        // erfc has not underflowed yet; direct log is exact enough.
        return kLogHalf + std::log(std::erfc(z));
    }
    // Deep tail: Phi(x) = 0.5*exp(-z^2)*erfcx(z) with the asymptotic series
    // erfcx(z) ~ 1/(z*sqrt(pi)) * (1 - 1/(2z^2) + 3/(4z^4) - 15/(8z^6) + ...).
    const double iz2 = 1.0 / (z * z);
    double series = 1.0 + iz2 * (-0.5 + iz2 * (0.75 + iz2 * (-1.875 + iz2 * 6.5625)));
    return kLogHalf - z * z - std::log(z * kSqrtPi) + std::log(series);
}

double inverse_mills(double x) {
    if (x > 40.0) return norm_pdf(x);  // Phi ~ 1
    return std::exp(norm_logpdf(x) - norm_logcdf(x));
}

double norm_quantile(double p) {
    if (!(p > 0.0 && p < 1.0))
        throw std::domain_error("norm_quantile: p must be in (0,1)");
    // Work in the lower tail, where erfc keeps full relative precision
    // (1 - p is exact for p > 0.5).
    if (p > 0.5) return -norm_quantile(1.0 - p);
    // Acklam's rational approximation...
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    double x;
    if (p < plow) {
        double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
            q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // ...plus one Halley step against the erfc-based CDF.
    const double e = norm_cdf(x) - p;
    const double u = e / norm_pdf(x);
    x -= u / (1.0 + 0.5 * x * u);
    return x;
}

double incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double lbeta =
        std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    const double front =
        std::exp(a * std::log(x) + b * std::log1p(-x) - lbeta);
    // Use the symmetry relation to keep the continued fraction convergent.
    if (x > (a + 1.0) / (a + b + 2.0))
        return 1.0 - incomplete_beta(b, a, 1.0 - x);
    // Modified Lentz.
    const double tiny = 1e-300;
    double f = 1.0, c = 1.0, d = 0.0;
    for (int m = 0; m <= 300; ++m) {
        double numerator;
        if (m == 0) {
            numerator = 1.0;
        } else if (m % 2 == 0) {
            const double k = m / 2.0;
            numerator = k * (b - k) * x / ((a + 2.0 * k - 1.0) * (a + 2.0 * k));
        } else {
            const double k = (m - 1.0) / 2.0;
            numerator =
                -((a + k) * (a + b + k) * x) / ((a + 2.0 * k) * (a + 2.0 * k + 1.0));
        }
        d = 1.0 + numerator * d;
        if (std::fabs(d) < tiny) d = tiny;
        d = 1.0 / d;
        c = 1.0 + numerator / c;
        if (std::fabs(c) < tiny) c = tiny;
        const double delta = c * d;
        f *= delta;
        if (std::fabs(delta - 1.0) < 1e-15) break;
    }
    return front * (f - 1.0) / a;
}

double student_t_sf(double t, double df) {
    if (df <= 0.0) throw std::domain_error("student_t_sf: df must be positive");
    if (std::isnan(t)) return std::numeric_limits<double>::quiet_NaN();
    const double x = df / (df + t * t);
    const double half_tail = 0.5 * incomplete_beta(0.5 * df, 0.5, x);
    return t >= 0.0 ? half_tail : 1.0 - half_tail;
}

double quantile_sorted(std::span<const double> sorted, double p) {
    if (sorted.empty())
        throw std::invalid_argument("quantile_sorted: empty sample");
    if (p <= 0.0) return sorted.front();
    if (p >= 1.0) return sorted.back();
    const double h = static_cast<double>(sorted.size() - 1) * p;
    const std::size_t lo = static_cast<std::size_t>(h);
    const double frac = h - static_cast<double>(lo);
    if (lo + 1 >= sorted.size()) return sorted.back();
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

double weighted_quantile_sorted(std::span<const double> sorted,
                                std::span<const double> weights, double p) {
    if (sorted.empty())
        throw std::invalid_argument("weighted_quantile_sorted: empty sample");
    if (sorted.size() != weights.size())
        throw std::invalid_argument("weighted_quantile_sorted: size mismatch");
    if (sorted.size() == 1) return sorted.front();
    if (p <= 0.0) return sorted.front();
    if (p >= 1.0) return sorted.back();

    double total = 0.0;
    for (double w : weights) total += w;
    // Plotting positions are monotone because C_k - w_k = C_{k-1} grows
    // while W - w_k stays within [W - max w, W).
    double cum = 0.0;
    double prev_pos = 0.0;
    double prev_val = sorted.front();
    for (std::size_t k = 0; k < sorted.size(); ++k) {
        cum += weights[k];
        const double denom = total - weights[k];
        const double pos = denom > 0.0 ? (cum - weights[k]) / denom : 1.0;
        if (p <= pos) {
            if (k == 0 || pos == prev_pos) return sorted[k];
            const double frac = (p - prev_pos) / (pos - prev_pos);
            return prev_val + frac * (sorted[k] - prev_val);
        }
        prev_pos = pos;
        prev_val = sorted[k];
    }
    return sorted.back();
}

Moments moments(std::span<const double> values) {
    Moments m;
    m.n = values.size();
    if (m.n == 0) return m;
    const double n = static_cast<double>(m.n);
    m.mean = kernels::sum(values) / n;
    std::vector<double> dev(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) dev[i] = values[i] - m.mean;
    const double m2 = kernels::sum_sq(dev) / n;
    if (m2 <= 0.0) {
        m.degenerate = true;
        m.sd = 0.0;
        return m;
    }
    m.sd = m.n > 1 ? std::sqrt(kernels::sum_sq(dev) / (n - 1.0)) : 0.0;
    std::vector<double> dev2(values.size());
    for (std::size_t i = 0; i < dev.size(); ++i) dev2[i] = dev[i] * dev[i];
    const double m3 = kernels::dot(dev2, dev) / n;
    const double m4 = kernels::sum_sq(dev2) / n;
    m.skewness = m3 / std::pow(m2, 1.5);
    m.kurtosis = m4 / (m2 * m2);
    return m;
}

WeightedSample weighted_sample(std::span<const double> values,
                               std::span<const double> weights) {
    WeightedSample ws;
    if (values.empty()) return ws;
    ws.sum_w = kernels::sum(weights);
    if (ws.sum_w <= 0.0) return ws;
    ws.mean = kernels::weighted_sum(weights, values) / ws.sum_w;
    const double sum_w2 = kernels::sum_sq(weights);
    ws.n_eff = ws.sum_w * ws.sum_w / sum_w2;
    std::vector<double> dev(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) dev[i] = values[i] - ws.mean;
    const double wss = kernels::weighted_dot(weights, dev, dev) / ws.sum_w;
    // Bessel-style correction with the effective size.
    ws.var = ws.n_eff > 1.0 ? wss * ws.n_eff / (ws.n_eff - 1.0) : 0.0;
    return ws;
}

WelchResult welch_from_summary(double mean1, double var1, double n1,
                               double mean2, double var2, double n2) {
    WelchResult r;
    const double se1 = var1 / n1, se2 = var2 / n2;
    const double se = std::sqrt(se1 + se2);
    if (se <= 0.0) {
        // Degenerate samples: identical constants give t = 0, p = 1.
        r.t = 0.0;
        r.df = n1 + n2 - 2.0;
        r.p = 1.0;
        return r;
    }
    r.t = (mean1 - mean2) / se;
    r.df = (se1 + se2) * (se1 + se2) /
           (se1 * se1 / (n1 - 1.0) + se2 * se2 / (n2 - 1.0));
    r.p = 2.0 * student_t_sf(std::fabs(r.t), r.df);
    return r;
}

WelchResult welch_test(std::span<const double> a, std::span<const double> b) {
    const Moments ma = moments(a), mb = moments(b);
    return welch_from_summary(ma.mean, ma.sd * ma.sd, static_cast<double>(ma.n),
                              mb.mean, mb.sd * mb.sd, static_cast<double>(mb.n));
}

}  // namespace panelfx::stats
