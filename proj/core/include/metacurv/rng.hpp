#pragma once

#include <cstdint>

namespace metacurv {

/// splitmix64 generator. Used everywhere randomness is needed so that
/// every stream is a pure function of (seed, tag, indices) and runs are
/// reproducible bit-for-bit regardless of threading or platform.
struct SplitMix64 {
    std::uint64_t state = 0;

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0,1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
};

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Stream tags; keep values stable, they are part of the reproducibility
// contract (checkpoints resume against the same streams).
inline constexpr std::uint64_t kStreamInit = 0x696e6974ull;        // weight init
inline constexpr std::uint64_t kStreamTrain = 0x747261696eull;     // training episodes
inline constexpr std::uint64_t kStreamValidation = 0x76616cull;    // held-out validation set
inline constexpr std::uint64_t kStreamEval = 0x6576616cull;        // evaluation episodes

/// Counter-based stream derivation: the returned generator depends only on
/// (seed, tag, a, b), never on call order.
inline SplitMix64 substream(std::uint64_t seed, std::uint64_t tag, std::uint64_t a = 0,
                            std::uint64_t b = 0) {
    std::uint64_t s = mix64(seed + 0x9E3779B97F4A7C15ull);
    s = mix64(s ^ (tag + 0xD1B54A32D192ED03ull));
    s = mix64(s + a * 0x9E3779B97F4A7C15ull + 1);
    s = mix64(s + b * 0xD1B54A32D192ED03ull + 1);
    return SplitMix64{s};
}

}  // namespace metacurv
