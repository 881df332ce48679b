#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string_view>
#include <vector>

namespace rtsad {

// Deterministic random source. The standard distributions are
// implementation-defined, so every draw here is built directly on the raw
// mt19937_64 stream to keep results bit-identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, bound). bound must be > 0.
    std::uint64_t below(std::uint64_t bound);

    // Standard normal via Box-Muller; caches the second variate.
    double normal();

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        shuffle(std::span<T>(items));
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// SplitMix64 finalizer; used to mix seeds.
std::uint64_t mix64(std::uint64_t x);

// Stable derivation of a child seed from a parent seed and a list of
// integer coordinates. Independent of platform and call order.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> parts);

// FNV-1a over the bytes of a tag; lets call sites use readable labels.
std::uint64_t tag_hash(std::string_view tag);

}  // namespace rtsad
