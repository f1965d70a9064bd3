#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

// Small counter-friendly PRNG utilities. Everything here is fully specified,
// so seeded results are identical across platforms and thread counts.

namespace bnn::rng {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Hashes a tuple of integers into one well-mixed 64-bit value. Used to key
// counter-based streams: mix({seed, layer, step, index}) gives a stateless,
// order-independent per-element random word.
inline std::uint64_t mix(std::initializer_list<std::uint64_t> parts) {
    std::uint64_t state = 0x243f6a8885a308d3ULL;  // pi fractional bits
    for (std::uint64_t p : parts) {
        state ^= p + 0x9e3779b97f4a7c15ULL + (state << 6) + (state >> 2);
        (void)splitmix64(state);
        state = splitmix64(state);
    }
    return state;
}

// Uniform double in [0, 1) from 53 random mantissa bits.
inline double to_unit_double(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Sequential generator for initialization, shuffling and test data.
struct SplitMix {
    std::uint64_t state;

    explicit SplitMix(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() { return splitmix64(state); }
    double next_unit() { return to_unit_double(next()); }
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }
    // Unbiased integer in [0, n): rejection sampling on the top range.
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) return 0;
        std::uint64_t limit = ~std::uint64_t{0} - ~std::uint64_t{0} % n;
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % n;
    }
};

template <typename T>
void shuffle(std::vector<T>& v, SplitMix& g) {
    if (v.empty()) return;
    for (std::size_t i = v.size() - 1; i > 0; --i) {
        std::size_t j = static_cast<std::size_t>(g.next_below(i + 1));
        std::swap(v[i], v[j]);
    }
}

}  // namespace bnn::rng
