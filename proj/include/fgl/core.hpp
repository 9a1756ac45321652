#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace fgl {

inline constexpr const char* kVersionString = "1.0.0";

// Base error for anything that goes wrong at run time. Config validation
// gets its own subclass so the CLI can map it to a distinct exit code.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

namespace detail {

inline std::string format(const char* fmt) { return fmt; }

template <typename... Args>
std::string format(const char* fmt, Args... args) {
    const int n = std::snprintf(nullptr, 0, fmt, args...);
    std::string out(static_cast<std::size_t>(n), '\0');
    std::snprintf(out.data(), out.size() + 1, fmt, args...);
    return out;
}

} // namespace detail

template <typename... Args>
[[noreturn]] void fail(const char* fmt, Args... args) {
    throw Error(detail::format(fmt, args...));
}

template <typename... Args>
[[noreturn]] void fail_config(const char* fmt, Args... args) {
    throw ConfigError(detail::format(fmt, args...));
}

// ---------------------------------------------------------------------------
// Seeding and random numbers.
//
// Everything random in the library flows through Rng, which maps raw 64-bit
// states to doubles by hand instead of relying on std:: distributions, so a
// given seed produces the same stream on every platform and standard library.
// ---------------------------------------------------------------------------

// SplitMix64 finalizer; the workhorse behind seed derivation.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Derives a child seed from a master seed and one or more integer salts.
// Used everywhere a run seed fans out into per-phase / per-client streams:
//   derive_seed(master, salt)            e.g. the partition stream
//   derive_seed(master, salt, round, k)  e.g. client k's stream in round t
// The chain is mix64 folds, so any prefix change reshuffles everything after.
inline std::uint64_t derive_seed(std::uint64_t seed) { return seed; }

template <typename... Rest>
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt, Rest... rest) {
    return derive_seed(mix64(seed ^ mix64(salt)), rest...);
}

// Salt constants for the documented seed fan-out. One per phase.
namespace seed_salt {
inline constexpr std::uint64_t kPartition = 0xA1;
inline constexpr std::uint64_t kInit = 0xB1;
inline constexpr std::uint64_t kClient = 0xC1;
inline constexpr std::uint64_t kSelect = 0xD1;
inline constexpr std::uint64_t kPrompt = 0xE1;
inline constexpr std::uint64_t kSynth = 0xF1;
inline constexpr std::uint64_t kLandscape = 0x1C;
inline constexpr std::uint64_t kDataTrain = 0x21;
inline constexpr std::uint64_t kDataTest = 0x22;
inline constexpr std::uint64_t kServerTrain = 0x5E;
} // namespace seed_salt

// xoshiro256** by Blackman & Vigna. Small, fast, and fully specified here,
// which keeps every sampled value bit-reproducible per seed.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        // Seed expansion via SplitMix64, as the xoshiro authors recommend.
        std::uint64_t s = seed;
        for (auto& word : state_) {
            s += 0x9E3779B97F4A7C15ULL;
            word = mix64(s);
        }
        has_spare_ = false;
        spare_ = 0.0;
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n) via Lemire's multiply-shift with rejection.
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) fail("Rng::below: n must be positive");
        std::uint64_t x = next_u64();
        __uint128_t m = static_cast<__uint128_t>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t threshold = (0ULL - n) % n;
            while (lo < threshold) {
                x = next_u64();
                m = static_cast<__uint128_t>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Standard normal via Box-Muller; caches the second value.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

    // Marsaglia-Tsang gamma(shape, 1); shape < 1 handled by the boost trick.
    double gamma(double shape) {
        if (shape <= 0.0) fail("Rng::gamma: shape must be positive, got %g", shape);
        if (shape < 1.0) {
            const double u = uniform();
            return gamma(shape + 1.0) * std::pow(u > 0 ? u : 1e-300, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = gaussian();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    // Dirichlet(alpha * 1_n) proportions.
    std::vector<double> dirichlet(double alpha, std::size_t n) {
        std::vector<double> draws(n);
        double sum = 0.0;
        for (auto& g : draws) {
            g = gamma(alpha);
            sum += g;
        }
        if (sum <= 0.0) {
            // All-zero underflow corner at tiny alpha: put the mass on one index.
            draws.assign(n, 0.0);
            draws[below(n)] = 1.0;
            return draws;
        }
        for (auto& g : draws) g /= sum;
        return draws;
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4];
    bool has_spare_;
    double spare_;
};

} // namespace fgl
