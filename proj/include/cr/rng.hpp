#ifndef CR_RNG_HPP
#define CR_RNG_HPP

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace cr {

// Deterministic random source. All draws go through explicit mappings on
// top of mt19937_64 so that a given seed produces the same stream on every
// platform and standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t uniform_index(std::uint64_t n);

    // Standard normal via Box-Muller; the spare value is cached.
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    bool bernoulli(double p) { return uniform() < p; }

    // k distinct indices drawn from [0, n) by partial Fisher-Yates,
    // returned in draw order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    // Independent child stream labeled by purpose.
    Rng fork(std::string_view label) const;

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// FNV-1a over bytes; used for stream labels and config digests.
std::uint64_t fnv1a(std::string_view bytes);

}  // namespace cr

#endif
