// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/ever.hpp"

#include <gtest/gtest.h>

#include <algorithm>

namespace ever::test {

/// Sphere with a given density and view-independent color. Zero channels are
/// raised to 1e-6 so the softplus inverse stays finite.
inline EllipsoidPrimitive sphere(const Vec3 &mean, double radius, double sigma, const Rgb &rgb) {
    const Rgb c{std::max(rgb.x, 1e-6), std::max(rgb.y, 1e-6), std::max(rgb.z, 1e-6)};
    auto p = make_primitive(mean, {radius, radius, radius}, 0.5, c, 0);
    p.alpha = alpha_from_sigma(sigma, p.scale);
    return p;
}

inline Scene scene_of(std::vector<EllipsoidPrimitive> prims, const Rgb &background = {}) {
    Scene s;
    s.sh_degree = 0;
    s.sh_degree_active = 0;
    s.background = background;
    s.primitives = std::move(prims);
    return s;
}

inline Ray ray(const Vec3 &o, const Vec3 &d) {
    Ray r;
    r.origin = o;
    r.direction = normalize(d);
    return r;
}

inline void expect_near(const Vec3 &a, const Vec3 &b, double tol) {
    EXPECT_NEAR(a.x, b.x, tol);
    EXPECT_NEAR(a.y, b.y, tol);
    EXPECT_NEAR(a.z, b.z, tol);
}

/// Events of a primitive with fixed density and color over [t0, t1] along +z.
inline std::vector<RayEvent> slab_events(double t0, double t1, double sigma, const Rgb &c, std::uint32_t index) {
    const HitPair h{t0, t1, index};
    return {enter_event(h, sigma, c), exit_event(h, sigma, c)};
}

} // namespace ever::test
