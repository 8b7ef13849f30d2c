// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string_view>

namespace vapi {

// splitmix64 finalizer; used for seed derivation and stream hashing.
inline uint64_t mix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    return mix64(a ^ (mix64(b) + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2)));
}

// Counter-based generator (philox4x32-10). Outputs depend only on
// (seed, stream, draw index), so draws are reproducible across platforms
// and independent streams can be split freely.
class SeededRng {
public:
    static constexpr std::string_view kAlgorithm = "philox4x32-10";

    explicit SeededRng(uint64_t seed, uint64_t stream = 0)
        : seed_(seed), stream_(stream) {}

    // Derives a child stream id from a path of integers.
    static uint64_t stream_of(std::initializer_list<uint64_t> path) {
        uint64_t h = 0x243F6A8885A308D3ull;
        for (uint64_t p : path) h = hash_combine(h, p);
        return h;
    }

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }

    uint64_t next_u64() {
        if (buf_pos_ >= 2) {
            philox_block();
            buf_pos_ = 0;
        }
        return buf64_[buf_pos_++];
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [0, n), n >= 1. Lemire multiply-shift.
    uint64_t next_below(uint64_t n) {
        return static_cast<uint64_t>(
            (static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller, spare cached.
    double next_gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u = 1.0 - next_double();  // (0, 1]
        const double r = std::sqrt(-2.0 * std::log(u));
        const double t = 6.283185307179586477 * next_double();
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

private:
    static void mulhilo(uint32_t a, uint32_t b, uint32_t& hi, uint32_t& lo) {
        const uint64_t p = static_cast<uint64_t>(a) * b;
        hi = static_cast<uint32_t>(p >> 32);
        lo = static_cast<uint32_t>(p);
    }

    void philox_block() {
        uint32_t c0 = static_cast<uint32_t>(counter_);
        uint32_t c1 = static_cast<uint32_t>(counter_ >> 32);
        uint32_t c2 = static_cast<uint32_t>(stream_);
        uint32_t c3 = static_cast<uint32_t>(stream_ >> 32);
        uint32_t k0 = static_cast<uint32_t>(seed_);
        uint32_t k1 = static_cast<uint32_t>(seed_ >> 32);
        for (int round = 0; round < 10; ++round) {
            uint32_t hi0, lo0, hi1, lo1;
            mulhilo(0xD2511F53u, c0, hi0, lo0);
            mulhilo(0xCD9E8D57u, c2, hi1, lo1);
            const uint32_t n0 = hi1 ^ c1 ^ k0;
            const uint32_t n1 = lo1;
            const uint32_t n2 = hi0 ^ c3 ^ k1;
            const uint32_t n3 = lo0;
            c0 = n0; c1 = n1; c2 = n2; c3 = n3;
            k0 += 0x9E3779B9u;
            k1 += 0xBB67AE85u;
        }
        buf64_[0] = (static_cast<uint64_t>(c1) << 32) | c0;
        buf64_[1] = (static_cast<uint64_t>(c3) << 32) | c2;
        ++counter_;
    }

    uint64_t seed_ = 0;
    uint64_t stream_ = 0;
    uint64_t counter_ = 0;
    uint64_t buf64_[2] = {0, 0};
    int buf_pos_ = 2;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace vapi
