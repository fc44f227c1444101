#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "lensless/hash.hpp"

namespace lensless {

// Deterministic RNG: mt19937_64 + explicit Box-Muller so the normal stream does
// not depend on the standard library's distribution implementation.
class SeededRng {
public:
    explicit SeededRng(uint64_t seed) : eng_(seed), seed_(seed) {}

    uint64_t seed() const { return seed_; }

    uint64_t next_u64() { return eng_(); }

    // uniform in [0,1)
    double uniform() {
        return (eng_() >> 11) * 0x1.0p-53;
    }

    // uniform in (0,1]; avoids log(0) in Box-Muller
    double uniform_open() {
        return ((eng_() >> 11) + 1) * 0x1.0p-53;
    }

    int uniform_int(int lo, int hi) { // inclusive range [lo, hi]
        uint64_t span = (uint64_t)(hi - lo) + 1;
        return lo + (int)(eng_() % span);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform_open();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Child RNG for a named stage or item; children are independent streams.
    SeededRng derive(const std::string& label) const {
        return SeededRng(mix64(seed_ ^ fnv1a(label)));
    }
    SeededRng derive(const std::string& label, uint64_t index) const {
        uint64_t h = fnv1a(label);
        h = fnv1a(&index, sizeof(index), h);
        return SeededRng(mix64(seed_ ^ h));
    }

private:
    std::mt19937_64 eng_;
    uint64_t seed_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Fisher-Yates shuffle; std::shuffle is implementation-defined, this is not.
template <class T>
inline void shuffle(std::vector<T>& v, SeededRng& rng) {
    for (size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[(size_t)rng.uniform_int(0, (int)i - 1)]);
}

} // namespace lensless
