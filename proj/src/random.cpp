#include "pearl/random.hpp"

namespace pearl {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t state) {
    for (unsigned char c : bytes) {
        state ^= c;
        state *= 0x100000001b3ULL;
    }
    return state;
}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view image_id, std::string_view object) {
    char le[8];
    for (int i = 0; i < 8; ++i) le[i] = static_cast<char>((seed >> (8 * i)) & 0xFF);
    std::uint64_t h = fnv1a(std::string_view(le, 8));
    h = fnv1a(std::string_view("\0", 1), h);
    h = fnv1a(image_id, h);
    h = fnv1a(std::string_view("\0", 1), h);
    h = fnv1a(object, h);
    return mix64(h);
}

std::uint64_t Rng::below(std::uint64_t n) {
    // Rejection sampling on the top of the range keeps the draw unbiased.
    const std::uint64_t limit = UINT64_MAX - (UINT64_MAX % n + 1) % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x > limit);
    return x % n;
}

std::int64_t Rng::between(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
}

double Rng::unit() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

}  // namespace pearl
