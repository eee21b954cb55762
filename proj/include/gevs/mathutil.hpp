// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace gevs {

inline constexpr double kPi = 3.14159265358979323846;

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }

    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        const double n = norm();
        if (n == 0.0) throw std::invalid_argument("cannot normalize zero vector");
        return *this / n;
    }
    bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Row-major 3x3 matrix.
struct Mat3 {
    double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

    static Mat3 identity() { return Mat3{}; }
    static Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
        return Mat3{{r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z}};
    }
    static Mat3 from_columns(const Vec3& c0, const Vec3& c1, const Vec3& c2) {
        return Mat3{{c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z}};
    }

    double operator()(int r, int c) const { return m[r * 3 + c]; }
    double& operator()(int r, int c) { return m[r * 3 + c]; }
    bool operator==(const Mat3& o) const {
        for (int i = 0; i < 9; ++i) if (m[i] != o.m[i]) return false;
        return true;
    }

    Vec3 row(int r) const { return {m[r * 3], m[r * 3 + 1], m[r * 3 + 2]}; }
    Vec3 col(int c) const { return {m[c], m[3 + c], m[6 + c]}; }

    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0.0;
                for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
                r(i, j) = s;
            }
        return r;
    }
    Mat3 transposed() const {
        return Mat3{{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
    }
    double determinant() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) -
               m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }
    double max_abs_diff(const Mat3& o) const {
        double d = 0.0;
        for (int i = 0; i < 9; ++i) d = std::max(d, std::abs(m[i] - o.m[i]));
        return d;
    }
    // Orthonormal with determinant +1, both within tol.
    bool is_rotation(double tol) const {
        const Mat3 rtr = transposed() * (*this);
        if (rtr.max_abs_diff(Mat3::identity()) > tol) return false;
        return std::abs(determinant() - 1.0) <= tol;
    }
};

// Unit quaternion, used for rotation interpolation.
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    static Quat from_matrix(const Mat3& r);
    Mat3 to_matrix() const;
    double dot(const Quat& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
    Quat normalized() const {
        const double n = std::sqrt(dot(*this));
        return Quat{w / n, x / n, y / n, z / n};
    }
};

// Constant-angular-velocity interpolation between two rotations.
Quat slerp(const Quat& a, const Quat& b, double t);

// Deterministic splitmix64-style seed derivation so independent rng streams
// can be split off one master seed.
std::uint64_t mix_seed(std::uint64_t master, std::uint64_t stream_tag);

// Seeded random source. mt19937_64 gives a platform-pinned raw stream; the
// distributions are hand-rolled because the std:: ones are
// implementation-defined and would break cross-platform reproducibility.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() {
        const std::uint64_t v = engine_();
        audit_ = (audit_ ^ v) * 0x100000001b3ULL;
        ++draws_;
        return v;
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }
    // Uniform in (0, 1); never returns 0 so it is safe under log().
    double uniform_open() { return (static_cast<double>(raw() >> 11) + 0.5) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), unbiased via rejection.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("uniform_index: n must be positive");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v;
        do { v = raw(); } while (v >= limit);
        return v % n;
    }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        return lo + static_cast<int>(uniform_index(static_cast<std::uint64_t>(hi - lo + 1)));
    }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal, Box-Muller with one cached value.
    double normal() {
        if (has_cached_) { has_cached_ = false; return cached_; }
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * kPi * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    // FNV-1a over every raw draw; lets callers prove two runs consumed
    // identical streams.
    std::uint64_t audit_hash() const { return audit_; }
    std::uint64_t draw_count() const { return draws_; }

private:
    std::mt19937_64 engine_;
    std::uint64_t audit_ = 0xcbf29ce484222325ULL;
    std::uint64_t draws_ = 0;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

}  // namespace gevs
