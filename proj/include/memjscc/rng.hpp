#pragma once

#include <cstdint>
#include <random>

namespace memjscc {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Counter-style stream derivation: streams for distinct (seed, index) pairs
// are independent, so any parallel schedule over indices reproduces the same
// draws.
inline std::uint64_t derive_stream_seed(std::uint64_t master_seed, std::uint64_t index) {
    return splitmix64(splitmix64(master_seed) ^ splitmix64(index * 0x9e3779b97f4a7c15ULL + 1));
}

// Three-part key, used for paired evaluation noise keyed by
// (image index, delay bits, draw index).
inline std::uint64_t derive_stream_seed(std::uint64_t master_seed, std::uint64_t a,
                                        std::uint64_t b, std::uint64_t c) {
    std::uint64_t s = splitmix64(master_seed);
    s = splitmix64(s ^ splitmix64(a + 0x100000001b3ULL));
    s = splitmix64(s ^ splitmix64(b + 0xcbf29ce484222325ULL));
    s = splitmix64(s ^ splitmix64(c + 0x27d4eb2f165667c5ULL));
    return s;
}

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed) {}

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    // Uniform over integers [lo, hi] inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        return std::uniform_int_distribution<std::int64_t>(lo, hi)(engine_);
    }

    double gauss() { return normal_(engine_); }

    std::int64_t binomial(std::int64_t n, double p) {
        if (n <= 0 || p <= 0.0) return 0;
        if (p >= 1.0) return n;
        return std::binomial_distribution<std::int64_t>(n, p)(engine_);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace memjscc
