#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace demtrain {

// Seeded RNG with hand-rolled distributions so that results do not depend on
// the standard library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : base_(seed), engine_(seed) {}

    // Derive an independent stream, e.g. one per layer or per epoch.
    Rng fork(std::uint64_t stream) const { return Rng(seed_mix(base_, stream)); }

    std::uint64_t next_u64() {
        std::uint64_t hi = engine_();
        std::uint64_t lo = engine_();
        return (hi << 32) ^ lo;
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n).
    std::uint64_t below(std::uint64_t n) {
        std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            std::uint64_t r = next_u64();
            if (r >= threshold) return r % n;
        }
    }

    // Box-Muller; one value per call keeps the stream layout simple.
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    bool coin(double p) { return uniform() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    static std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b) {
        // splitmix64 finalizer over the pair.
        std::uint64_t z = a + 0x9e3779b97f4a7c15ull + b * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t base_;
    std::mt19937_64 engine_;
};

inline std::vector<int> index_permutation(int n, Rng& rng) {
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    rng.shuffle(idx);
    return idx;
}

}  // namespace demtrain
