#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "sps/types.hpp"

namespace sps {

/// Identifies one reproducible random stream. Distinct consumers
/// (frames, trials, matrix fills) use distinct stream_ids under a
/// shared seed; equal pairs produce identical sequences everywhere.
struct RngSeed {
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
};

/// Counter-based generator: the state advances by a fixed increment and
/// every output is a finalizer hash of the state (splitmix64), so the
/// sequence is a pure function of (seed, stream_id) with no platform-
/// dependent behavior in the integer path.
class Rng {
public:
    explicit Rng(RngSeed s) {
        state_ = mix(s.seed + kGamma);
        state_ = mix(state_ ^ (s.stream_id + 0x1F83D9ABFB41BD6BULL));
    }

    std::uint64_t next_u64() {
        state_ += kGamma;
        return mix(state_);
    }

    /// Uniform on [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on the open interval (0, 1); never returns an endpoint,
    /// so threshold tests R <= p are deterministic at p == 0 and p == 1.
    double uniform_open01() {
        return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
    }

    /// Standard normal via Box-Muller (pairs cached).
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = uniform_open01();
        const double u2 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        cached_ = radius * std::sin(angle);
        has_cached_ = true;
        return radius * std::cos(angle);
    }

    /// Unbiased integer in [0, n); n must be positive.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0)
            throw ParamError("Rng::below: n must be positive");
        // Lemire multiply-shift with rejection.
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (lo < threshold) {
                m = static_cast<unsigned __int128>(next_u64()) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

private:
    static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_ = 0;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

/// Uniform k-subset of {0, ..., n-1} without replacement (partial
/// Fisher-Yates), returned sorted ascending.
inline std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
    if (n < 1 || k < 1 || k > n)
        throw ParamError("sample_without_replacement: need 1 <= k <= n");
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i)
        pool[i] = i;
    for (int t = 0; t < k; ++t) {
        const int j = t + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - t)));
        std::swap(pool[t], pool[j]);
    }
    std::vector<int> out(pool.begin(), pool.begin() + k);
    std::sort(out.begin(), out.end());
    return out;
}

} // namespace sps
