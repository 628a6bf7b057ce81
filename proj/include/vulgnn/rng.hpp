#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace vulgnn {

// Counter-based pseudo-random generator built on Philox4x32-10
// (Salmon et al., SC'11). Streams derived with split() are statistically
// independent; identical seed plus identical call sequence reproduces the
// same outputs on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {
        key_lo_ = static_cast<std::uint32_t>(seed);
        key_hi_ = static_cast<std::uint32_t>(seed >> 32);
    }

    // Independent child stream. Derivation depends only on (seed, tag),
    // never on how much the parent has been consumed.
    Rng split(std::uint64_t tag) const {
        return Rng(splitmix64(seed_ ^ splitmix64(tag + 0x9E3779B97F4A7C15ull)));
    }

    std::uint64_t seed() const { return seed_; }

    std::uint32_t next_u32() {
        if (buffer_pos_ == 4) {
            refill();
        }
        return buffer_[buffer_pos_++];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform in [0,1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Standard normal via Box-Muller with a cached spare.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u = 1.0 - uniform();
        const double v = uniform();
        const double r = std::sqrt(-2.0 * std::log(u));
        const double theta = 2.0 * 3.14159265358979323846 * v;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Unbiased integer in [0, bound) by rejection.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            const std::uint64_t x = next_u64();
            if (x >= threshold) {
                return x % bound;
            }
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // k distinct indices sampled from [0, n) in selection order.
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k) {
        std::vector<std::size_t> pool(n);
        for (std::size_t i = 0; i < n; ++i) {
            pool[i] = i;
        }
        std::vector<std::size_t> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k && i < n; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(below(n - i));
            std::swap(pool[i], pool[j]);
            out.push_back(pool[i]);
        }
        return out;
    }

    static std::uint64_t splitmix64(std::uint64_t x) {
        x += 0x9E3779B97F4A7C15ull;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
        return x ^ (x >> 31);
    }

    // One Philox4x32-10 block, exposed for known-answer tests.
    static void philox4x32(const std::uint32_t ctr[4], const std::uint32_t key[2],
                           std::uint32_t out[4]) {
        std::uint32_t c0 = ctr[0], c1 = ctr[1], c2 = ctr[2], c3 = ctr[3];
        std::uint32_t k0 = key[0], k1 = key[1];
        for (int round = 0; round < 10; ++round) {
            if (round != 0) {
                k0 += 0x9E3779B9u;
                k1 += 0xBB67AE85u;
            }
            const std::uint64_t p0 = 0xD2511F53ull * c0;
            const std::uint64_t p1 = 0xCD9E8D57ull * c2;
            const std::uint32_t n0 = static_cast<std::uint32_t>(p1 >> 32) ^ c1 ^ k0;
            const std::uint32_t n1 = static_cast<std::uint32_t>(p1);
            const std::uint32_t n2 = static_cast<std::uint32_t>(p0 >> 32) ^ c3 ^ k1;
            const std::uint32_t n3 = static_cast<std::uint32_t>(p0);
            c0 = n0;
            c1 = n1;
            c2 = n2;
            c3 = n3;
        }
        out[0] = c0;
        out[1] = c1;
        out[2] = c2;
        out[3] = c3;
    }

private:
    void refill() {
        const std::uint32_t ctr[4] = {
            static_cast<std::uint32_t>(block_),
            static_cast<std::uint32_t>(block_ >> 32),
            0u,
            0u,
        };
        const std::uint32_t key[2] = {key_lo_, key_hi_};
        philox4x32(ctr, key, buffer_);
        ++block_;
        buffer_pos_ = 0;
    }

    std::uint64_t seed_;
    std::uint32_t key_lo_ = 0;
    std::uint32_t key_hi_ = 0;
    std::uint64_t block_ = 0;
    std::uint32_t buffer_[4] = {0, 0, 0, 0};
    int buffer_pos_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

} // namespace vulgnn
