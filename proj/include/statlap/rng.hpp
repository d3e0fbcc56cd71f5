#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace statlap {

/// Counter-based generator: every draw is a pure function of (seed, stream, index),
/// so samples can be produced in any order or split across workers.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t bits(std::uint64_t index, std::uint64_t stream = 0) const
    {
        std::uint64_t x = mix(seed_ ^ mix(stream + 0x632be59bd9b4e019ULL));
        return mix(x ^ mix(index * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
    }

    /// Uniform in the open interval (0, 1).
    double uniform(std::uint64_t index, std::uint64_t stream = 0) const
    {
        return (static_cast<double>(bits(index, stream) >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller on two independent streams.
    double normal(std::uint64_t index, std::uint64_t stream = 0) const
    {
        double u1 = uniform(index, 2 * stream);
        double u2 = uniform(index, 2 * stream + 1);
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    std::uint64_t seed() const { return seed_; }

private:
    // splitmix64 finalizer
    static std::uint64_t mix(std::uint64_t z)
    {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
};

} // namespace statlap
