#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace cfprobe {

// 64-bit FNV-1a. Used for input digests and for deriving per-entity seeds
// from a base seed plus a tag, so the same config reproducibly yields
// distinct streams per worker / per query.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    char raw[8];
    for (int i = 0; i < 8; ++i) raw[i] = static_cast<char>((base >> (8 * i)) & 0xff);
    std::uint64_t h = fnv1a64(std::string_view(raw, 8));
    return fnv1a64(tag, h);
}

// Seeded random stream with hand-rolled distributions on top of mt19937_64.
// The standard fixes the engine's output sequence but not the library
// distributions, so all draws below are implemented here and reruns with the
// same seed produce identical values.
class RandomStream {
  public:
    explicit RandomStream(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform real in [lo, hi).
    double uniform_real(double lo, double hi) {
        double u = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
        return lo + u * (hi - lo);
    }

    // Uniform integer in [lo, hi], both bounds inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        if (lo > hi) throw std::invalid_argument("uniform_int: empty range");
        std::uint64_t range = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
        if (range == 0) return static_cast<std::int64_t>(next_u64());  // full 64-bit span
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % range;
        std::uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return lo + static_cast<std::int64_t>(v % range);
    }

    bool bernoulli(double p) { return uniform_real(0.0, 1.0) < p; }

    // Box-Muller, always consuming two uniforms (no cached spare).
    double normal(double mean, double sd) {
        double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;        // [0, 1)
        double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.141592653589793238462643 * u2);
        return mean + sd * z;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::size_t pick_index(std::size_t n) {
        if (n == 0) throw std::invalid_argument("pick_index: empty range");
        return static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1));
    }

  private:
    std::mt19937_64 engine_;
};

}  // namespace cfprobe
