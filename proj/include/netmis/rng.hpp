#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace netmis {

/// splitmix64 step; used to mix seeds and tags into substream states.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Deterministic PRNG (xoshiro256**) with explicit transforms, so streams are
/// bit-reproducible across platforms and compilers. One instance per
/// (component, replication) substream; see Rng::substream.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64(sm);
    }

    /// Child stream keyed by up to three tags. Changing one component's
    /// draws never shifts another component's stream.
    static Rng substream(std::uint64_t root, std::uint64_t tag0,
                         std::uint64_t tag1 = 0, std::uint64_t tag2 = 0) {
        std::uint64_t sm = root;
        std::uint64_t h = splitmix64(sm);
        sm = h ^ (0xd6e8feb86659fd93ULL * (tag0 + 1));
        h = splitmix64(sm);
        sm = h ^ (0xa5a5a5a5a5a5a5a5ULL * (tag1 + 1));
        h = splitmix64(sm);
        sm = h ^ (0xc3c3c3c3c3c3c3c3ULL * (tag2 + 1));
        return Rng(splitmix64(sm));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform double in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    /// Standard normal via Box-Muller; pairs cached.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sd) { return mean + sd * normal(); }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t s_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

/// Standard normal CDF.
inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0);
}

}  // namespace netmis
