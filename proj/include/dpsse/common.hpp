#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace dpsse {

/// Malformed input text (case files, JSON plans); message carries the location.
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Structurally well-formed input that violates a model invariant.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// API misuse (e.g. whitening an already-whitened model).
struct ContractError : std::logic_error {
    using std::logic_error::logic_error;
};

/// The measurement set cannot determine the state (rank deficiency where
/// the operation requires full column rank).
struct UnobservableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// A strict-mode exchange round completed with a missing payload.
struct SyncError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Deterministic RNG. Gaussian draws go through an explicit Box-Muller
/// transform so that streams are reproducible independent of the standard
/// library's distribution implementations.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    double uniform01() { return (gen_() >> 11) * 0x1.0p-53; }

    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        double u2 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        double mag = std::sqrt(-2.0 * std::log(u1));
        spare_ = mag * std::sin(2.0 * M_PI * u2);
        have_spare_ = true;
        return mag * std::cos(2.0 * M_PI * u2);
    }

    /// Uniform integer in [0, n).
    std::uint64_t uniform_index(std::uint64_t n) {
        std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / n * n;
        std::uint64_t v = gen_();
        while (v >= limit) v = gen_();
        return v % n;
    }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

/// Stream seed for trial `index` of a run seeded with `seed` (splitmix64 mix).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Shortest decimal that round-trips to the same double.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace dpsse
