#pragma once

// Pinned portable PRNG: xoshiro256++ seeded through splitmix64, with all
// variate transforms done by inverse CDF so that a given (seed, stream)
// produces the same draws on every platform and standard library.

#include <cstdint>

namespace panelfx {

class Rng {
  public:
    // Independent stream `stream` of generator `seed` (per-firm streams in
    // the synthetic generator use stream = firm index).
    static Rng seeded(std::uint64_t seed, std::uint64_t stream = 0);

    std::uint64_t next_u64();

    // Uniform on the open interval (0,1); safe to feed into norm_quantile.
    double uniform01();
    double uniform(double lo, double hi);

    // Standard normal via inverse CDF (one uniform per draw).
    double normal();
    double normal(double mean, double sd);

    // |N(0, sd^2)|, drawn by inverse CDF on the folded distribution.
    double half_normal(double sd);

    // N(mean, sd^2) conditioned on being > lower.
    double truncated_normal_above(double mean, double sd, double lower);

    // Bernoulli(p).
    bool bernoulli(double p);

    // Integer in [0, n).
    std::uint64_t below(std::uint64_t n);

  private:
    std::uint64_t s_[4];
};

}  // namespace panelfx
