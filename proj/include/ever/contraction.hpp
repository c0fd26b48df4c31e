// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/math.hpp"
#include "ever/scene.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace ever {

/// Scene contraction: identity inside the unit ball, maps R^3 into the
/// radius-2 ball: C(x) = x (2 sqrt(max(1,|x|^2)) - 1) / max(1, |x|^2).
inline Vec3 contract(const Vec3 &x) {
    const double m = std::max(1.0, dot(x, x));
    return x * ((2.0 * std::sqrt(m) - 1.0) / m);
}

/// Inverse contraction for |z| < 2:
/// C^-1(z) = z / (sqrt(max(1,|z|^2)) (2 - min(2, sqrt(max(1,|z|^2))))).
inline Vec3 uncontract(const Vec3 &z) {
    const double r = std::sqrt(std::max(1.0, dot(z, z)));
    return z / (r * (2.0 - std::min(2.0, r)));
}

/// Jacobian of uncontract at z.
inline Mat3 uncontract_jacobian(const Vec3 &z) {
    const double r = norm(z);
    if (r <= 1.0) return Mat3{};
    const double g = 1.0 / (r * (2.0 - r));
    const double dg = -(2.0 - 2.0 * r) * g * g; // d g / d r
    Mat3 j = Mat3::diagonal({g, g, g});
    const Mat3 zz = outer(z, z);
    for (int i = 0; i < 9; ++i) j.m[static_cast<std::size_t>(i)] += dg / r * zz.m[static_cast<std::size_t>(i)];
    return j;
}

inline double det3(const Mat3 &m) {
    return m(0, 0) * (m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1)) - m(0, 1) * (m(1, 0) * m(2, 2) - m(1, 2) * m(2, 0)) +
           m(0, 2) * (m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0));
}

/// Radius at which n equal spheres fill the radius-2 ball at close-packing density.
inline double packing_radius(std::size_t n) {
    constexpr double kClosePacking = 0.74048;
    return n == 0 ? 0.0 : 2.0 * std::cbrt(kClosePacking / static_cast<double>(n));
}

/// World placement of the contracted coordinate frame.
struct SeedBounds {
    Vec3 center;
    double radius = 1.0;
};

struct SeedOptions {
    double alpha = 0.1;
    double color = 0.5;
    int sh_degree = 1;
    double max_scale = kDefaultMaxPrimitiveSize;
};

/// Seeds n isotropic primitives: means uniform in the contracted radius-2
/// ball, mapped back through C^-1. Each sphere's contracted covariance
/// r^2 I is pushed through the linearized inverse contraction, J r^2 I J^T,
/// and then replaced by the isotropic sphere of equal volume.
template <class Rng>
std::vector<EllipsoidPrimitive> seed_inverse_contraction(std::size_t n, const SeedBounds &bounds, Rng &rng,
                                                         const SeedOptions &opts = {}) {
    std::vector<EllipsoidPrimitive> out;
    out.reserve(n);
    const double r_pack = packing_radius(n);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    while (out.size() < n) {
        Vec3 dir{normal(rng), normal(rng), normal(rng)};
        const double len = norm(dir);
        if (!(len > 0.0)) continue;
        const double radius = 2.0 * std::cbrt(uni(rng));
        if (radius >= 2.0 - 1e-6) continue;
        const Vec3 z = dir * (radius / len);
        const Mat3 j = uncontract_jacobian(z);
        const Mat3 cov = j * Mat3::diagonal({r_pack * r_pack, r_pack * r_pack, r_pack * r_pack}) * j.transposed();
        const double s = std::min(opts.max_scale, bounds.radius * std::pow(det3(cov), 1.0 / 6.0));
        out.push_back(make_primitive(bounds.center + uncontract(z) * bounds.radius, {s, s, s}, opts.alpha,
                                     {opts.color, opts.color, opts.color}, opts.sh_degree));
    }
    return out;
}

} // namespace ever
