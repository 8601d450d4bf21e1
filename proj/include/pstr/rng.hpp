#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace pstr {

// SplitMix64. Chosen over std::mt19937 + std distributions because the
// output stream and every derived uniform/gaussian draw below are fully
// specified, so corpora reproduce bit-for-bit across platforms.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // [0, 1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // [lo, hi], hi inclusive
    std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t range = static_cast<std::uint64_t>(hi - lo) + 1;
        // fixed-point multiply keeps the mapping platform independent
        const unsigned __int128 m =
            static_cast<unsigned __int128>(next_u64()) * range;
        return lo + static_cast<std::int64_t>(m >> 64);
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * next_double();
    }

    // Box-Muller; consumes two uniforms per call
    double gaussian() {
        double u1 = next_double();
        double u2 = next_double();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Derives an independent stream; mixing through one splitmix step
    // decorrelates adjacent stream ids.
    static SplitMix64 stream(std::uint64_t seed, std::uint64_t stream_id) {
        SplitMix64 mixer(seed ^ (0x9e3779b97f4a7c15ULL * (stream_id + 1)));
        return SplitMix64(mixer.next_u64());
    }

private:
    std::uint64_t state_;
};

// FNV-1a, used for deriving noise streams from string content and for
// file digests in run manifests.
inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace pstr
