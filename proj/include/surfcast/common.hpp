#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace surfcast {

// Error taxonomy shared by every module. The CLI maps these to exit codes
// (config = 2, input = 3, numerical = 4).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class InputError : public std::runtime_error {
public:
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Deterministic RNG. mt19937_64 is fully specified by the standard; the
// distributions below are spelled out explicitly because the std::*
// distribution classes are implementation-defined and would break
// byte-reproducibility across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t raw() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Rejection-free modulo bias is irrelevant at
    // the ranges used here, but rejection keeps draws exact.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    // Standard normal via Box-Muller; caches the sine partner.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0, 1] so the log is finite.
        const double u1 = (static_cast<double>(eng_() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    // Normal truncated to +/- 2 std, used for weight init.
    double truncated_normal(double std) {
        double z;
        do {
            z = normal();
        } while (std::fabs(z) > 2.0);
        return z * std;
    }

private:
    std::mt19937_64 eng_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Geophysical constants.
namespace geo {
inline constexpr double kEarthRadiusM = 6371000.0;
inline constexpr double kMetersPerDegree = kEarthRadiusM * M_PI / 180.0;
inline constexpr double kGravity = 9.81;        // m/s^2
inline constexpr double kOmega = 7.2921e-5;     // rad/s
inline constexpr double kLatClampDeg = 20.0;    // geostrophy validity guard
}  // namespace geo

struct GeophysParams {
    double g = geo::kGravity;
    double omega = geo::kOmega;
    double lat_clamp = geo::kLatClampDeg;

    // Coriolis parameter with |lat| clamped away from the equator,
    // sign-preserving.
    double coriolis(double lat_deg) const {
        const double eff = std::copysign(std::max(std::fabs(lat_deg), lat_clamp), lat_deg);
        return 2.0 * omega * std::sin(eff * M_PI / 180.0);
    }
};

// FNV-1a 64-bit, used for checkpoint/product content hashes.
inline std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string to_hex(std::uint64_t v);

// Day index <-> ISO 8601 timestamp (UTC midnight). Day 0 is 2023-01-01.
std::string day_to_iso8601(int day);
int iso8601_to_day(const std::string& ts);

}  // namespace surfcast
