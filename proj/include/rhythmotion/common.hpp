#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace rhythmotion {

// Bad user input: missing/malformed files, invalid config. CLI exit code 2.
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Internal fault: non-finite values, broken invariants. CLI exit code 3.
struct RuntimeFault : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require_input(bool ok, const std::string& msg) {
    if (!ok) throw InputError(msg);
}

inline void require(bool ok, const std::string& msg) {
    if (!ok) throw RuntimeFault(msg);
}

inline bool all_finite(std::span<const double> xs) {
    for (double x : xs)
        if (!std::isfinite(x)) return false;
    return true;
}

// FNV-1a over raw bytes; used for frozen-parameter checks and artifact digests.
inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline double clamp(double x, double lo, double hi) {
    return x < lo ? lo : (x > hi ? hi : x);
}

// Wrap an angle to (-pi, pi].
inline double wrap_angle(double a) {
    constexpr double two_pi = 6.283185307179586476925286766559;
    a = std::fmod(a, two_pi);
    if (a <= -3.14159265358979323846) a += two_pi;
    if (a > 3.14159265358979323846) a -= two_pi;
    return a;
}

constexpr int kFrameRate = 60;

}  // namespace rhythmotion
