#pragma once

#include <cmath>
#include <cstdint>

namespace pairdiff {

// splitmix64 finalizer (Steele, Lea & Flood / Vigna).
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Counter-based splitmix64 stream. All randomness in the project flows
// through this generator so that results are byte-reproducible given a
// seed, regardless of platform stdlib or thread schedule. Distinct
// streams (per replication, per variable) are derived by folding tags
// into the seed with derive_stream(); parallel replications therefore
// reproduce serial results exactly.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ull;
        return mix64(state_);
    }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // Standard normal via Box-Muller; the companion deviate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform01(); // (0, 1]
        double u2 = uniform01();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Student t with 3 degrees of freedom: Z0 / sqrt((Z1^2+Z2^2+Z3^2)/3).
    double student_t3() {
        double z = normal();
        double c = 0.0;
        for (int k = 0; k < 3; ++k) {
            double zi = normal();
            c += zi * zi;
        }
        return z / std::sqrt(c / 3.0);
    }

    // Fisher-Yates index shuffle driver: uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) { return next() % bound; }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Derives an independent stream seed from (seed, tag a, tag b).
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
    std::uint64_t s = mix64(seed ^ (a * 0xd1b54a32d192ed03ull + 0x8cb92ba72f3d8dd7ull));
    return mix64(s ^ (b * 0xaef17502108ef2d9ull + 0x9e3779b97f4a7c15ull));
}

} // namespace pairdiff
