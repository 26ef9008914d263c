#pragma once
// Deterministic seeded random streams. Each stochastic component of a
// simulation owns its own stream so that reconfiguring one component
// (e.g. the error model) never perturbs the draws of another.

#include <cstdint>
#include <cmath>
#include <random>
#include <stdexcept>

namespace binbatch {

namespace detail {

// SplitMix64 finalizer; used to whiten seeds and derive stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace detail

// A seeded pseudo-random stream. Two streams constructed from the same seed
// produce identical sequences; draws are reproducible across runs of the
// same binary.
class RandomStream {
public:
    explicit RandomStream(std::uint64_t seed) : engine_(detail::splitmix64(seed)) {}

    // The stream_id-th independent stream derived from a master seed.
    static RandomStream derive(std::uint64_t master_seed, std::uint64_t stream_id) {
        return RandomStream(detail::splitmix64(master_seed ^ (0x632BE59BD9B4E019ULL * (stream_id + 1))));
    }

    // Uniform draw in [0, 1) with 53-bit resolution.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Inverse-CDF exponential draw, mean 1/rate.
    double exponential(double rate) { return -std::log1p(-uniform01()) / rate; }

    // Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("RandomStream::index: n must be positive");
        return static_cast<std::size_t>(engine_() % n);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace binbatch
