#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace actconv {

/// Deterministic random source. All value mappings are implemented on top
/// of the raw mt19937_64 stream so that sequences are identical across
/// platforms and fully restorable from a saved state string.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

    /// Uniform double in [0, 1).
    double uniform01() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    /// Uniform integer in [0, n); n must be positive.
    std::int64_t uniform_int(std::int64_t n);

    /// Standard normal via Box-Muller; exactly two raw draws per call.
    double normal();
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    std::uint64_t raw() { return eng_(); }

    std::string state() const;
    void set_state(const std::string& s);

private:
    std::mt19937_64 eng_;
};

}  // namespace actconv
