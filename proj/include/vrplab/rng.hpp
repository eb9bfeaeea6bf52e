#pragma once

// Counter-based random numbers: a stream is addressed by (seed, tag, index)
// and draws are the SplitMix64 finalizer applied to key + counter * golden
// ratio. No sequential state is shared between streams, so any instance of
// a dataset can be regenerated on its own, on any platform.

#include <cmath>
#include <cstdint>

namespace vrplab {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Stream tags keep draws for different purposes independent.
enum class StreamTag : std::uint64_t {
    Instance = 1,
    Tightness = 2,
    BatchTightness = 3,
    Windows = 4,
    Init = 5,
    Sampling = 6,
    Shuffle = 7,
};

class CounterRng {
public:
    CounterRng(std::uint64_t seed, StreamTag tag, std::uint64_t index)
        : key_(splitmix64(splitmix64(seed ^ (static_cast<std::uint64_t>(tag) << 56)) + index)) {}

    std::uint64_t next() { return splitmix64(key_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi] by multiply-high reduction.
    int uniform_int(int lo, int hi) {
        const auto span = static_cast<unsigned __int128>(static_cast<std::uint64_t>(hi - lo) + 1);
        return lo + static_cast<int>((static_cast<unsigned __int128>(next()) * span) >> 64);
    }

    /// Standard normal via Box-Muller (one value per call).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

}  // namespace vrplab
