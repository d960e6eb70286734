#pragma once

#include <cmath>
#include <cstdint>

namespace voxsim {

// Counter-based random streams. Every random quantity in the simulator is a
// pure function of (seed, stream tag, key..., counter), so regenerating any
// shard — a voxel, a neuron, a step — yields the same values no matter how
// the work is split across workers.
//
// Construction: SplitMix64 applied to a keyed affine counter walk. Not
// cryptographic; passes the usual equidistribution sanity checks we care
// about here (see test_rng).

namespace rngstream {
// Stream tags keep independent uses of the same (seed, id) apart.
inline constexpr uint64_t ou_noise = 1;      // per (neuron gid, step)
inline constexpr uint64_t init_state = 2;    // per neuron gid
inline constexpr uint64_t pick_voxel = 3;    // per (neuron gid, pick)
inline constexpr uint64_t pick_neuron = 4;   // per (neuron gid, pick, attempt)
inline constexpr uint64_t pick_pop = 5;      // per (neuron gid, pick)
inline constexpr uint64_t weight = 6;        // per (neuron gid, pick, receptor)
inline constexpr uint64_t conductance = 7;   // per (population, neuron index, receptor)
inline constexpr uint64_t connectome = 8;    // synthetic topology edges
inline constexpr uint64_t assim = 9;         // ensemble machinery
} // namespace rngstream

inline constexpr uint64_t kGolden = 0x9e3779b97f4a7c15ull;

inline constexpr uint64_t splitmix64(uint64_t x) {
    x += kGolden;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Fold keys into a stream base. Order-sensitive by design.
inline constexpr uint64_t mix_key(uint64_t a, uint64_t b) {
    return splitmix64(a ^ (b + kGolden + (a << 6) + (a >> 2)));
}

inline constexpr uint64_t mix_key(uint64_t a, uint64_t b, uint64_t c) {
    return mix_key(mix_key(a, b), c);
}

inline constexpr uint64_t mix_key(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
    return mix_key(mix_key(a, b, c), d);
}

// k-th 64-bit word of the stream identified by `base`.
inline constexpr uint64_t stream_word(uint64_t base, uint64_t k) {
    return splitmix64(base + k * kGolden);
}

// Uniform in [0, 1), 53-bit resolution.
inline double stream_u01(uint64_t base, uint64_t k) {
    return static_cast<double>(stream_word(base, k) >> 11) * 0x1.0p-53;
}

// Standard normal via Box-Muller; consumes words 2k and 2k+1 of the stream.
inline double stream_normal(uint64_t base, uint64_t k) {
    const double u1 = 1.0 - stream_u01(base, 2 * k);     // (0, 1]
    const double u2 = stream_u01(base, 2 * k + 1);       // [0, 1)
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Uniform integer in [0, n), n > 0. Bias at 64-bit scale is negligible for
// the population sizes used here (< 2^32).
inline uint64_t stream_below(uint64_t base, uint64_t k, uint64_t n) {
    return stream_word(base, k) % n;
}

} // namespace voxsim
