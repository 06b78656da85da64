#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

namespace wsaflow {

// Deterministic random source. mt19937_64 is fully specified by the standard;
// the distributions are hand-rolled so that streams are identical across
// compilers and standard libraries.
class Rng {
   public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform() { return double(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // [0, n)
    int uniform_int(int n) {
        uint64_t bound = UINT64_MAX - UINT64_MAX % uint64_t(n);
        uint64_t x;
        do {
            x = eng_();
        } while (x >= bound);
        return int(x % uint64_t(n));
    }

    // Standard normal via Box-Muller, one spare value cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1], keeps log() finite
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

   private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stable name hash for deriving per-parameter init streams.
inline uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace wsaflow
