#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "unisuf/bytes.hpp"

namespace unisuf {

// Seeded simulation RNG. Not a CSPRNG: key material drawn from it is only as
// unpredictable as the seed, which is the point for reproducible traces.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    // Uniform integer in [lo, hi], inclusive, without modulo bias.
    std::uint64_t uniform(std::uint64_t lo, std::uint64_t hi);
    Bytes bytes(std::size_t n);
    // Independent stream keyed by a label, so adding draws to one subsystem
    // does not perturb another.
    Rng fork(std::string_view label) const;

    template <class It>
    void shuffle(It first, It last) {
        auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            auto j = uniform(0, i - 1);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

}  // namespace unisuf
