#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace lgrad {

// Deterministic RNG wrapper. All sampling goes through explicit
// transforms of the mt19937_64 stream so output bytes do not depend on
// the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Derive a stream for a named role from a master seed. Role ids are
    // published constants; the mix keeps streams statistically disjoint.
    static Rng for_role(std::uint64_t master_seed, std::uint64_t role_id) {
        std::uint64_t z = master_seed + role_id * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return Rng(z ^ (z >> 31));
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n).
    std::uint64_t uniform_int(std::uint64_t n) {
        // Rejection sampling keeps the draw unbiased.
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do {
            v = gen_();
        } while (v >= limit);
        return v % n;
    }

    // Standard normal via Box-Muller; consumes two uniforms per draw.
    double normal() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    std::mt19937_64 gen_;
};

// Role ids for Rng::for_role; documented in the README.
namespace rng_role {
inline constexpr std::uint64_t dataset = 1;
inline constexpr std::uint64_t agent_base = 0x100;  // + agent_id
inline constexpr std::uint64_t meta_train = 0x2000;
inline constexpr std::uint64_t generate = 0x3000;
inline constexpr std::uint64_t eval = 0x4000;
}  // namespace rng_role

}  // namespace lgrad
