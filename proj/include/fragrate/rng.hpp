#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fragrate {

namespace detail {

// splitmix64 (Steele, Lea, Flood). Used only to mix seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace detail

// Deterministic random stream. std::mt19937_64 has a fully specified output
// sequence, and all variate transforms below are written out explicitly, so a
// given seed produces identical draws on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Stream-splitting rule: replica k of master seed s draws its own seed from
    // splitmix64 run twice on (s, k). Distinct replicas never share a stream.
    static Rng for_replica(std::uint64_t master_seed, std::uint64_t replica) {
        std::uint64_t state = master_seed;
        std::uint64_t a = detail::splitmix64(state);
        state ^= replica * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL;
        std::uint64_t b = detail::splitmix64(state);
        return Rng(a ^ (b + 0x9e3779b97f4a7c15ULL));
    }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on the open interval (0,1); cannot return 0 or 1.
    double uniform01() {
        return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    double exponential(double rate) { return -std::log(uniform01()) / rate; }

    // Index uniform on {0, 1, ..., n-1} by rejection; exact, no modulo bias.
    std::uint64_t uniform_index(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace fragrate
