// Deterministic random streams. mt19937_64 gives a portable bit sequence;
// the distribution transforms are written out explicitly because the standard
// library's distribution objects are not bit-stable across implementations.
// Substreams are derived by hashing (seed, tag, index) so results do not
// depend on evaluation order or worker count.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace streamconv {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
}

inline std::uint64_t hash_tag(std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a 64
    for (char ch : tag) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ull;
    }
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n); n > 0. Rejection-free modulo is fine here:
    // n is always tiny relative to 2^64 so the bias is immaterial, but we
    // keep Lemire-style rejection for exactness anyway.
    std::uint64_t below(std::uint64_t n) {
        std::uint64_t x, r;
        do {
            x = gen_();
            r = x % n;
        } while (x - r > std::uint64_t(0) - n);
        return r;
    }

    // Marsaglia polar method; explicit so the byte stream is ours.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        double m = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * m;
        have_spare_ = true;
        return u * m;
    }

    template <class It>
    void shuffle(It first, It last) {
        auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            std::uint64_t j = below(i);
            std::swap(first[i - 1], first[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Independent stream for a named purpose and index, e.g.
// derived_rng(seed, "oversample", epoch).
inline Rng derived_rng(std::uint64_t seed, std::string_view tag,
                       std::uint64_t index = 0) {
    return Rng(hash_combine(hash_combine(seed, hash_tag(tag)), index));
}

}  // namespace streamconv
