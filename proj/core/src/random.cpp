#include "rtsad/random.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace rtsad {

std::uint64_t Rng::below(std::uint64_t bound) {
    // Lemire-style rejection on the low range keeps the draw unbiased.
    const std::uint64_t threshold = (std::numeric_limits<std::uint64_t>::max() - bound + 1) % bound;
    for (;;) {
        const std::uint64_t r = engine_();
        if (r >= threshold) return r % bound;
    }
}

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t h = mix64(base);
    for (const std::uint64_t p : parts) h = mix64(h ^ mix64(p));
    return h;
}

std::uint64_t tag_hash(std::string_view tag) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace rtsad
