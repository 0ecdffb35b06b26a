#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace prbm::rng {

// Counter-based random numbers: every variate is a pure function of
// (seed, path, step, lane), so ensembles are bit-reproducible under any
// thread schedule. The block cipher is Philox-2x64-10 with the standard
// round constants.

inline constexpr std::uint64_t kPhiloxM = 0xD2B74407B1CE6E93ULL;
inline constexpr std::uint64_t kWeyl = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

struct u64pair {
    std::uint64_t a, b;
};

inline u64pair philox2x64(std::uint64_t c0, std::uint64_t c1, std::uint64_t key) {
    for (int round = 0; round < 10; ++round) {
        const unsigned __int128 prod = static_cast<unsigned __int128>(kPhiloxM) * c0;
        const std::uint64_t hi = static_cast<std::uint64_t>(prod >> 64);
        const std::uint64_t lo = static_cast<std::uint64_t>(prod);
        c0 = hi ^ key ^ c1;
        c1 = lo;
        key += kWeyl;
    }
    return {c0, c1};
}

// Uniform on (0,1]; the offset keeps log() finite.
inline double to_unit(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
}

struct normal_pair {
    double z0, z1;
};

inline normal_pair box_muller(std::uint64_t bits_a, std::uint64_t bits_b) {
    const double u1 = to_unit(bits_a);
    const double u2 = to_unit(bits_b);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925287 * u2;
#if defined(__GNUC__) && defined(__linux__)
    double s, c;
    ::sincos(angle, &s, &c);
    return {radius * c, radius * s};
#else
    return {radius * std::cos(angle), radius * std::sin(angle)};
#endif
}

// One independent stream per simulated path.
class PathStream {
public:
    PathStream(std::uint64_t master_seed, std::uint64_t path_id)
        : key_(splitmix64(master_seed ^ splitmix64(path_id + 0x632BE59BD9B4E019ULL))) {}

    // Pair `pair_index` of standard normals for step `step`.
    normal_pair normals(std::uint64_t step, std::uint64_t pair_index) const {
        const u64pair r = philox2x64(step, pair_index, key_);
        return box_muller(r.a, r.b);
    }

    // Auxiliary uniform lane (bootstrap, direction sampling, ...).
    double uniform(std::uint64_t step, std::uint64_t lane) const {
        return to_unit(philox2x64(step, lane | 0x8000000000000000ULL, key_).a);
    }

    std::uint64_t key() const { return key_; }

private:
    std::uint64_t key_;
};

// Fills `out[0..n)` with standard normals for one step of a path.
inline void fill_normals(const PathStream& stream, std::uint64_t step, double* out, int n) {
    int i = 0;
    std::uint64_t pair = 0;
    while (i + 1 < n) {
        const normal_pair np = stream.normals(step, pair++);
        out[i++] = np.z0;
        out[i++] = np.z1;
    }
    if (i < n) out[i] = stream.normals(step, pair).z0;
}

}  // namespace prbm::rng
