// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <utility>

namespace ctxprobe {

// SplitMix64 in counter form: the k-th output is mix(seed + (k+1) * gamma).
// Every random decision in the project (curation sampling, option shuffles,
// distractor draws, permutation nulls, synthetic fixtures) goes through this
// type, so outputs are identical across standard libraries and platforms.
class CounterRng {
public:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

    explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

    // Independent stream for (seed, index); used to give each permutation
    // iteration its own generator regardless of thread scheduling.
    static CounterRng substream(std::uint64_t seed, std::uint64_t index) {
        return CounterRng(mix(seed ^ mix(index + kGamma)));
    }

    static constexpr std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next() {
        ++counter_;
        return mix(seed_ + counter_ * kGamma);
    }

    // Unbiased integer in [0, n) by rejection. n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Standard normal via Box-Muller; one draw per call.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Fisher-Yates, last index first.
    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    std::uint64_t draws() const { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

} // namespace ctxprobe
