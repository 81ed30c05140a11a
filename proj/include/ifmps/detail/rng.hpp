// rng.hpp — Seeded deterministic draws with portable mappings (the standard
// distributions are implementation-defined, which would break byte-identical
// validation output across toolchains)

#pragma once

#include <cstdint>
#include <random>

namespace ifmps::detail {

struct Rng {
    std::mt19937_64 engine;

    explicit Rng(std::uint64_t seed) : engine(seed) {}

    // Uniform in [0, 1) with 53 significant bits.
    double uniform() {
        return static_cast<double>(engine() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi] by rejection-free scaling (bias is far
    // below any use here; ranges are tiny).
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(uniform() * (hi - lo + 1));
    }

    int sign() { return (engine() >> 63) ? 1 : -1; }
};

} // namespace ifmps::detail
