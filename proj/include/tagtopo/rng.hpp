#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tagtopo {

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the xor, good enough for stream derivation
    std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
    x ^= x >> 30; x *= 0xbf58476d1ce4e5b9ULL;
    x ^= x >> 27; x *= 0x94d049bb133111ebULL;
    x ^= x >> 31;
    return x;
}

// Deterministic RNG with hand-rolled distributions. std's distribution
// objects are not pinned across standard libraries; these are, so runs
// reproduce bit-for-bit anywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    // Named sub-stream derived from one root seed; stages stay
    // independently reproducible.
    static Rng stream(std::uint64_t root_seed, std::string_view name) {
        return Rng(hash_combine(root_seed, fnv1a64(name)));
    }

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1)
    double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }

    // uniform in (0, 1]
    double uniform_pos() { return double((gen_() >> 11) + 1) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // inclusive bounds, unbiased via rejection
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = std::uint64_t(hi - lo) + 1;
        const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % span;
        std::uint64_t x;
        do { x = gen_(); } while (x >= limit);
        return lo + std::int64_t(x % span);
    }

    // Box-Muller, no spare caching so call order is the full state
    double normal(double mean = 0.0, double stddev = 1.0) {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
        return mean + stddev * z;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = std::size_t(uniform_int(0, std::int64_t(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct values from [0, n) in sampling order
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> pool(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) pool[std::size_t(i)] = i;
        shuffle(pool);
        pool.resize(std::size_t(std::min(n, k)));
        return pool;
    }

private:
    std::mt19937_64 gen_;
};

} // namespace tagtopo
