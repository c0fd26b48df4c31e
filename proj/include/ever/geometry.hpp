// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/math.hpp"
#include "ever/scene.hpp"

#include <array>
#include <cstdint>
#include <optional>

namespace ever {

struct Ray {
    Vec3 origin;
    Vec3 direction{0.0, 0.0, 1.0}; // unit length
    double t_min = 0.0;
    double t_max = kInf;

    Vec3 at(double t) const { return origin + direction * t; }
};

/// Entry and exit parameters of one primitive along a ray.
struct HitPair {
    double t_enter = 0.0;
    double t_exit = 0.0;
    std::uint32_t primitive_index = 0;

    bool operator==(const HitPair &) const = default;
};

/// Orders hit pairs by (t_enter, primitive_index).
constexpr bool hit_before(const HitPair &a, const HitPair &b) {
    return a.t_enter < b.t_enter || (a.t_enter == b.t_enter && a.primitive_index < b.primitive_index);
}

/// Discriminant threshold in the normalized (unit-sphere) frame; values at or
/// below it are tangent or missing rays.
inline constexpr double kTangencyEpsilon = 1e-12;

namespace detail {

struct LocalRay {
    Vec3 origin;    // ray origin in the unit-sphere frame
    Vec3 direction; // not normalized
};

inline LocalRay to_local(const Ray &ray, const EllipsoidPrimitive &p, const Mat3 &rot) {
    return {cdiv(rot.transpose_mul(ray.origin - p.mean), p.scale), cdiv(rot.transpose_mul(ray.direction), p.scale)};
}

/// Unclamped roots of |o + t d|^2 = 1. Uses the closest-approach form of the
/// discriminant and the q = -(b + sign(b) sqrt(disc)) root pairing, which
/// avoid cancellation for distant or grazing rays.
inline std::optional<std::array<double, 2>> unit_sphere_roots(const LocalRay &r) {
    const double a = dot(r.direction, r.direction);
    const double half_b = dot(r.origin, r.direction);
    const double c = dot(r.origin, r.origin) - 1.0;
    const Vec3 closest = r.origin - r.direction * (half_b / a);
    const double disc = 1.0 - dot(closest, closest); // normalized discriminant
    if (!(disc > 0.0)) return std::nullopt;
    const double root = std::sqrt(a * disc);
    const double q = half_b >= 0.0 ? -(half_b + root) : -(half_b - root);
    double t0 = c / q;
    double t1 = q / a;
    if (t0 > t1) std::swap(t0, t1);
    return std::array<double, 2>{t0, t1};
}

} // namespace detail

/// Ray/ellipsoid intersection. The ray is moved into the primitive frame where
/// the ellipsoid is the unit sphere; world t values are preserved by the affine
/// map. t_enter is clamped to t_min and t_exit to t_max.
inline std::optional<HitPair> intersect_ellipsoid(const Ray &ray, const EllipsoidPrimitive &p,
                                                  std::uint32_t index = 0) {
    const auto roots = detail::unit_sphere_roots(detail::to_local(ray, p, p.rotation_matrix()));
    if (!roots) return std::nullopt;
    const auto [t0, t1] = *roots;
    if (t1 <= ray.t_min || t0 >= ray.t_max) return std::nullopt;
    return HitPair{std::max(t0, ray.t_min), std::min(t1, ray.t_max), index};
}

/// d t / d(primitive parameters) for one intersection root.
struct RootPartials {
    Vec3 d_mean;
    std::array<double, 4> d_quat; // unprojected, (w, x, y, z)
    Vec3 d_scale;
};

/// Partials of the root t of |S^-1 R^T (o + t d - mu)|^2 = 1 by implicit
/// differentiation. `t` must be an unclamped root for this primitive.
inline RootPartials intersection_partials(const Ray &ray, const EllipsoidPrimitive &p, double t) {
    const Mat3 rot = p.rotation_matrix();
    const Vec3 v = ray.at(t) - p.mean;
    const Vec3 local = cdiv(rot.transpose_mul(v), p.scale); // point on the unit sphere
    const Vec3 local_dir = cdiv(rot.transpose_mul(ray.direction), p.scale);
    const double slope = dot(local, local_dir); // half of d phi / dt
    const Vec3 u = cdiv(local, p.scale);
    RootPartials out;
    out.d_mean = (rot * u) / slope;
    for (int k = 0; k < 3; ++k) out.d_scale[k] = (local[k] * local[k] / p.scale[k]) / slope;
    const auto gq = rotation_vjp(p.rotation, outer(v, u));
    for (int j = 0; j < 4; ++j) out.d_quat[static_cast<std::size_t>(j)] = -gq[static_cast<std::size_t>(j)] / slope;
    return out;
}

struct Aabb {
    Vec3 lo{kInf, kInf, kInf};
    Vec3 hi{-kInf, -kInf, -kInf};

    bool empty() const { return lo.x > hi.x; }
    Vec3 center() const { return (lo + hi) * 0.5; }
    Vec3 extent() const { return hi - lo; }
    void grow(const Aabb &b) {
        lo = vmin(lo, b.lo);
        hi = vmax(hi, b.hi);
    }
    void grow(const Vec3 &p) {
        lo = vmin(lo, p);
        hi = vmax(hi, p);
    }
    bool contains(const Vec3 &p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y && p.z >= lo.z && p.z <= hi.z;
    }
    bool contains(const Aabb &b) const { return b.empty() || (contains(b.lo) && contains(b.hi)); }
    double surface_area() const {
        if (empty()) return 0.0;
        const Vec3 e = extent();
        return 2.0 * (e.x * e.y + e.y * e.z + e.z * e.x);
    }
};

/// Tight world-space box: the half-extent along axis i is the norm of row i of R diag(scale).
inline Aabb aabb_of(const EllipsoidPrimitive &p) {
    const Mat3 m = p.rotation_matrix() * Mat3::diagonal(p.scale);
    const Vec3 half{norm(m.row(0)) + 1e-12, norm(m.row(1)) + 1e-12, norm(m.row(2)) + 1e-12};
    return {p.mean - half, p.mean + half};
}

/// Slab test; returns the parametric overlap of the ray with the box, or
/// nullopt when they are disjoint within [t_min, t_max].
inline std::optional<std::array<double, 2>> intersect_aabb(const Ray &ray, const Aabb &box) {
    double t0 = ray.t_min, t1 = ray.t_max;
    for (int i = 0; i < 3; ++i) {
        const double o = ray.origin[i], d = ray.direction[i];
        if (d == 0.0) {
            if (o < box.lo[i] || o > box.hi[i]) return std::nullopt;
            continue;
        }
        const double inv = 1.0 / d;
        double a = (box.lo[i] - o) * inv, b = (box.hi[i] - o) * inv;
        if (a > b) std::swap(a, b);
        t0 = std::max(t0, a);
        t1 = std::min(t1, b);
        if (t0 > t1) return std::nullopt;
    }
    return std::array<double, 2>{t0, t1};
}

} // namespace ever
