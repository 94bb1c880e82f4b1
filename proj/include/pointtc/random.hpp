#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace pointtc {

/// Seeded pseudo-random stream. Identical seeds give identical draw
/// sequences on the same toolchain. Not shareable across threads.
class RandomSource {
public:
    explicit RandomSource(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    /// Uniform on the open interval (0, 1); both endpoints are excluded.
    double uniform_open() noexcept {
        // 53 random bits shifted by half an ulp keep the draw off 0 and 1.
        const std::uint64_t bits = engine_() >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform_open(); }

    double normal(double mean = 0.0, double stddev = 1.0) {
        return mean + stddev * normal_(engine_);
    }

    double gumbel() noexcept { return -std::log(-std::log(uniform_open())); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) noexcept {
        return static_cast<std::size_t>(uniform_open() * static_cast<double>(n)) % n;
    }

    std::uint64_t next_u64() noexcept { return engine_(); }

    /// Independent child stream, derived deterministically from this one.
    RandomSource fork() noexcept { return RandomSource(engine_() ^ 0x9E3779B97F4A7C15ull); }

    template <typename It>
    void shuffle(It first, It last) noexcept {
        const auto n = static_cast<std::size_t>(last - first);
        for (std::size_t i = n; i > 1; --i) {
            std::swap(first[i - 1], first[index(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace pointtc
