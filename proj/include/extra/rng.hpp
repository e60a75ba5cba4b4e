#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <random>

namespace extra {

// Deterministic random stream. Every draw is an explicit transform of the
// raw 64-bit engine output, so sequences do not depend on the standard
// library's distribution implementations and reproduce across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t raw() { return gen_(); }

    // uniform on [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // standard normal via Box-Muller; consumes two uniforms per draw
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    bool bernoulli(double p) { return uniform() < p; }

    // uniform index in [0, n); multiply-shift keeps bias below 2^-64
    std::size_t index(std::size_t n) {
        const auto wide = static_cast<unsigned __int128>(gen_()) *
                          static_cast<unsigned __int128>(n);
        return static_cast<std::size_t>(wide >> 64);
    }

    // in-place Fisher-Yates shuffle
    template <class T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace extra
