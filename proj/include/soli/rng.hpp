#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace soli {

// Counter-based 64-bit generator (splitmix64). Every draw is a pure function
// of the state counter, so streams are reproducible across platforms and the
// state can be checkpointed as a single integer. All training-time coin and
// index draws go through the integer paths below; no floating point is
// involved in the decisions themselves.
class SplitMix64 {
public:
    SplitMix64() = default;
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

    // Uniform index in [0, n) via the multiply-shift reduction.
    std::uint64_t uniform_index(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    // Bernoulli(p) decided by an integer threshold compare on 53 bits.
    bool coin(double p) {
        if (p <= 0.0) { next(); return false; }
        if (p >= 1.0) { next(); return true; }
        const std::uint64_t threshold =
            static_cast<std::uint64_t>(std::llround(p * 9007199254740992.0)); // p * 2^53
        return (next() >> 11) < threshold;
    }

    // Uniform double in [0, 1).
    double u01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_ = 0;
};

// FNV-1a, used for config hashes and checkpoint checksums.
inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 0xCBF29CE484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace soli
