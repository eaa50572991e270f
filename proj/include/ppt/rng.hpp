#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace ppt {

// Deterministic random source built on splitmix64. Uniforms, normals and
// shuffles are derived from the raw stream directly, so sequences are
// reproducible across platforms and standard library versions.
// std::normal_distribution is deliberately avoided: its output is
// implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed ? seed : 0x9e3779b97f4a7c15ull) {}

    uint64_t next_u64() {
        // splitmix64; passes through zero-seed hardening in the constructor.
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Zero-mean Gaussian via Box-Muller, one value per call (spare cached).
    double normal(double sigma) {
        if (has_spare_) {
            has_spare_ = false;
            return spare_ * sigma;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta) * sigma;
    }

    // Uniform integer in [0, n). n must be positive.
    uint64_t below(uint64_t n) {
        // Rejection-free modulo; bias is negligible for the small n used here
        // and determinism is what matters.
        return next_u64() % n;
    }

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& values) {
        for (size_t i = values.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(values[i - 1], values[j]);
        }
    }

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ppt
