// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace ever {

/// Three-component double vector used for points, directions and scales.
struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    constexpr Vec3() = default;
    constexpr Vec3(double x_, double y_, double z_) : x(x_), y(y_), z(z_) {}

    constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
    constexpr double &operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }

    constexpr Vec3 operator+(const Vec3 &o) const { return {x + o.x, y + o.y, z + o.z}; }
    constexpr Vec3 operator-(const Vec3 &o) const { return {x - o.x, y - o.y, z - o.z}; }
    constexpr Vec3 operator-() const { return {-x, -y, -z}; }
    constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    constexpr Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
    constexpr Vec3 &operator+=(const Vec3 &o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }
    constexpr Vec3 &operator-=(const Vec3 &o) {
        x -= o.x;
        y -= o.y;
        z -= o.z;
        return *this;
    }
    constexpr Vec3 &operator*=(double s) {
        x *= s;
        y *= s;
        z *= s;
        return *this;
    }
    constexpr bool operator==(const Vec3 &) const = default;
};

constexpr Vec3 operator*(double s, const Vec3 &v) { return v * s; }
constexpr Vec3 cmul(const Vec3 &a, const Vec3 &b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }
constexpr Vec3 cdiv(const Vec3 &a, const Vec3 &b) { return {a.x / b.x, a.y / b.y, a.z / b.z}; }
constexpr double dot(const Vec3 &a, const Vec3 &b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
constexpr Vec3 cross(const Vec3 &a, const Vec3 &b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3 &v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalize(const Vec3 &v) { return v / norm(v); }
constexpr double min_component(const Vec3 &v) { return std::min({v.x, v.y, v.z}); }
constexpr double max_component(const Vec3 &v) { return std::max({v.x, v.y, v.z}); }
constexpr int argmin_component(const Vec3 &v) { return v.x <= v.y ? (v.x <= v.z ? 0 : 2) : (v.y <= v.z ? 1 : 2); }
constexpr int argmax_component(const Vec3 &v) { return v.x >= v.y ? (v.x >= v.z ? 0 : 2) : (v.y >= v.z ? 1 : 2); }
inline Vec3 vmin(const Vec3 &a, const Vec3 &b) { return {std::min(a.x, b.x), std::min(a.y, b.y), std::min(a.z, b.z)}; }
inline Vec3 vmax(const Vec3 &a, const Vec3 &b) { return {std::max(a.x, b.x), std::max(a.y, b.y), std::max(a.z, b.z)}; }
inline Vec3 vabs(const Vec3 &v) { return {std::abs(v.x), std::abs(v.y), std::abs(v.z)}; }
inline bool isfinite(const Vec3 &v) { return std::isfinite(v.x) && std::isfinite(v.y) && std::isfinite(v.z); }

/// Linear RGB radiance. Shares the arithmetic of Vec3.
using Rgb = Vec3;

/// Row-major 3x3 matrix.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    constexpr double operator()(int r, int c) const { return m[3 * r + c]; }
    constexpr double &operator()(int r, int c) { return m[3 * r + c]; }

    constexpr Vec3 row(int r) const { return {m[3 * r], m[3 * r + 1], m[3 * r + 2]}; }
    constexpr Vec3 col(int c) const { return {m[c], m[3 + c], m[6 + c]}; }

    constexpr Vec3 operator*(const Vec3 &v) const { return {dot(row(0), v), dot(row(1), v), dot(row(2), v)}; }
    constexpr Mat3 operator*(const Mat3 &o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = dot(row(i), o.col(j));
        return r;
    }
    constexpr Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
        return r;
    }
    /// R^T v without forming the transpose.
    constexpr Vec3 transpose_mul(const Vec3 &v) const { return {dot(col(0), v), dot(col(1), v), dot(col(2), v)}; }

    static constexpr Mat3 from_rows(const Vec3 &a, const Vec3 &b, const Vec3 &c) {
        return Mat3{{a.x, a.y, a.z, b.x, b.y, b.z, c.x, c.y, c.z}};
    }
    static constexpr Mat3 from_cols(const Vec3 &a, const Vec3 &b, const Vec3 &c) {
        return Mat3{{a.x, b.x, c.x, a.y, b.y, c.y, a.z, b.z, c.z}};
    }
    static constexpr Mat3 diagonal(const Vec3 &d) { return Mat3{{d.x, 0, 0, 0, d.y, 0, 0, 0, d.z}}; }
};

/// Rotation quaternion stored as (w, x, y, z).
struct Quat {
    double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

    constexpr double operator[](int i) const { return i == 0 ? w : (i == 1 ? x : (i == 2 ? y : z)); }
    constexpr double &operator[](int i) { return i == 0 ? w : (i == 1 ? x : (i == 2 ? y : z)); }
    constexpr bool operator==(const Quat &) const = default;

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quat normalized() const {
        const double n = norm();
        return {w / n, x / n, y / n, z / n};
    }

    constexpr Quat conjugate() const { return {w, -x, -y, -z}; }

    constexpr Quat operator*(const Quat &o) const {
        return {w * o.w - x * o.x - y * o.y - z * o.z, w * o.x + x * o.w + y * o.z - z * o.y,
                w * o.y - x * o.z + y * o.w + z * o.x, w * o.z + x * o.y - y * o.x + z * o.w};
    }

    static Quat from_axis_angle(const Vec3 &axis, double angle) {
        const Vec3 a = normalize(axis);
        const double s = std::sin(0.5 * angle);
        return {std::cos(0.5 * angle), a.x * s, a.y * s, a.z * s};
    }

    /// Rotation matrix for a unit quaternion.
    constexpr Mat3 to_matrix() const {
        const double xx = x * x, yy = y * y, zz = z * z;
        const double xy = x * y, xz = x * z, yz = y * z;
        const double wx = w * x, wy = w * y, wz = w * z;
        return Mat3{{1 - 2 * (yy + zz), 2 * (xy - wz), 2 * (xz + wy), 2 * (xy + wz), 1 - 2 * (xx + zz),
                     2 * (yz - wx), 2 * (xz - wy), 2 * (yz + wx), 1 - 2 * (xx + yy)}};
    }
};

/// Vector-Jacobian product of Quat::to_matrix: returns sum_ab G_ab dR_ab/dq_j
/// for each quaternion component j in (w, x, y, z) order.
constexpr std::array<double, 4> rotation_vjp(const Quat &q, const Mat3 &g) {
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    auto contract = [&g](const std::array<double, 9> &d) {
        double s = 0.0;
        for (int i = 0; i < 9; ++i) s += g.m[i] * d[i];
        return 2.0 * s;
    };
    return {contract({0, -z, y, z, 0, -x, -y, x, 0}), contract({0, y, z, y, -2 * x, -w, z, w, -2 * x}),
            contract({-2 * y, x, w, x, 0, z, -w, z, -2 * y}), contract({-2 * z, -w, x, w, -2 * z, y, x, y, 0})};
}

/// Outer product a b^T.
constexpr Mat3 outer(const Vec3 &a, const Vec3 &b) {
    return Mat3{{a.x * b.x, a.x * b.y, a.x * b.z, a.y * b.x, a.y * b.y, a.y * b.z, a.z * b.x, a.z * b.y, a.z * b.z}};
}

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kPi = 3.14159265358979323846;

} // namespace ever
