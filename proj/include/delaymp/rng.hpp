#pragma once

#include <cmath>
#include <cstdint>

namespace delaymp {

/// Deterministic per-stream generator.  Each (seed, stream) pair yields an
/// independent substream, so path p's draws do not depend on how many paths
/// or worker threads a run uses.  xoshiro256++ seeded through splitmix64.
class NormalStream {
  public:
    NormalStream(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (stream + 1));
        for (auto& si : s_) si = splitmix64(x);
        has_spare_ = false;
        spare_ = 0.0;
    }

    /// Standard normal draw via Box-Muller on explicit uniform bits.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0,1], u2 in [0,1)
        double u1, u2;
        do {
            u1 = to_unit(next());
        } while (u1 <= 0.0);
        u2 = to_unit(next());
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    /// Uniform draw in [0,1) with 53 random mantissa bits.
    double uniform() { return to_unit(next()); }

    std::uint64_t next() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

  private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }
    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
    static double to_unit(std::uint64_t v) {
        return static_cast<double>(v >> 11) * 0x1.0p-53;  // 53-bit mantissa in [0,1)
    }

    std::uint64_t s_[4];
    bool has_spare_;
    double spare_;
};

}  // namespace delaymp
