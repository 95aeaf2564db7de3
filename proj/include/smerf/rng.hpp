#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace smerf {

// splitmix64 stream. Used everywhere randomness is needed so results are
// identical across platforms and standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }  // [0,1)
    double uniform(double a, double b) { return a + (b - a) * uniform(); }

    int uniform_int(int n) {  // [0, n)
        return static_cast<int>(next_u64() % static_cast<uint64_t>(n));
    }

    // Box-Muller; the sine partner is cached, so draw parity matters for
    // reproducibility (it is part of the stream contract).
    double gaussian(double sigma) {
        if (has_spare_) {
            has_spare_ = false;
            return spare_ * sigma;
        }
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * M_PI * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * M_PI * u2) * sigma;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = next_u64() % i;
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Derives an independent stream for one purpose from a top-level seed, so
// adding draws to one consumer never shifts another consumer's stream.
inline uint64_t substream(uint64_t seed, std::string_view purpose) {
    uint64_t h = 1469598103934665603ull;  // FNV-1a 64
    for (char c : purpose) {
        h ^= static_cast<uint8_t>(c);
        h *= 1099511628211ull;
    }
    return seed ^ h;
}

}  // namespace smerf
