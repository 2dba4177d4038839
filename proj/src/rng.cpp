#include "panelfx/rng.hpp"

#include <cmath>

#include "panelfx/stats.hpp"

namespace panelfx {

namespace {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t rotl(std::uint64_t v, int k) {
    return (v << k) | (v >> (64 - k));
}

}  // namespace

Rng Rng::seeded(std::uint64_t seed, std::uint64_t stream) {
    Rng r;
    // Mix seed and stream so nearby (seed, stream) pairs decorrelate.
    std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
    r.s_[0] = splitmix64(x);
    r.s_[1] = splitmix64(x);
    r.s_[2] = splitmix64(x);
    r.s_[3] = splitmix64(x);
    return r;
}

std::uint64_t Rng::next_u64() {
    // xoshiro256++ (Blackman & Vigna, public domain reference sequence).
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform01() {
    // 53 random bits, shifted into (0,1) by a half-ulp offset.
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
}

double Rng::normal() { return stats::norm_quantile(uniform01()); }

double Rng::normal(double mean, double sd) { return mean + sd * normal(); }

double Rng::half_normal(double sd) {
    // |Z| has CDF 2*Phi(z) - 1; invert on a single uniform.
    const double u = uniform01();
    return sd * stats::norm_quantile(0.5 + 0.5 * u);
}

double Rng::truncated_normal_above(double mean, double sd, double lower) {
    const double p_lo = stats::norm_cdf((lower - mean) / sd);
    const double u = p_lo + uniform01() * (1.0 - p_lo);
    // u can round to 1.0 when the truncation point is deep in the upper tail.
    const double capped = u >= 1.0 ? 1.0 - 1e-16 : u;
    return mean + sd * stats::norm_quantile(capped);
}

bool Rng::bernoulli(double p) { return uniform01() < p; }

std::uint64_t Rng::below(std::uint64_t n) { return next_u64() % n; }

}  // namespace panelfx
