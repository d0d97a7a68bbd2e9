#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pearl {

/// FNV-1a over a byte string, folded into an existing state.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer; decorrelates nearby seeds.
std::uint64_t mix64(std::uint64_t x);

/// Per-(image, object) seed: mix(FNV-1a(seed || 0 || image || 0 || object)).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view image_id, std::string_view object);

/// mt19937_64 with platform-independent range reduction. The standard
/// distributions are implementation-defined, so they are not used anywhere a
/// result has to be reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);

    /// Uniform integer in [lo, hi].
    std::int64_t between(std::int64_t lo, std::int64_t hi);

    /// Uniform double in [0, 1) with 53 random bits.
    double unit();

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

private:
    std::mt19937_64 engine_;
};

}  // namespace pearl
