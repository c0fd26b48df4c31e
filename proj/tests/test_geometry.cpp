// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

#include <random>

using namespace ever;
using test::ray;

namespace {

EllipsoidPrimitive ellipsoid(const Vec3 &mean, const Vec3 &scale, const Quat &q = {}) {
    return make_primitive(mean, scale, 0.5, {1, 1, 1}, 0, q);
}

/// Roots of phi(t) = |M^-1 (o + t d - mu)|^2 - 1 by dense sampling and bisection.
std::optional<std::array<double, 2>> bisection_roots(const Ray &r, const EllipsoidPrimitive &p) {
    const Mat3 rot = p.rotation_matrix();
    auto phi = [&](double t) {
        const Vec3 l = cdiv(rot.transpose_mul(r.at(t) - p.mean), p.scale);
        return dot(l, l) - 1.0;
    };
    // The minimum of phi along the ray is where the local-frame distance is closest.
    double lo = -100.0, hi = 100.0;
    for (int i = 0; i < 200; ++i) {
        const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
        if (phi(m1) < phi(m2))
            hi = m2;
        else
            lo = m1;
    }
    const double tmin = 0.5 * (lo + hi);
    if (phi(tmin) >= 0.0) return std::nullopt;
    auto bisect = [&](double a, double b) {
        for (int i = 0; i < 200; ++i) {
            const double m = 0.5 * (a + b);
            if ((phi(a) < 0.0) == (phi(m) < 0.0))
                a = m;
            else
                b = m;
        }
        return 0.5 * (a + b);
    };
    return std::array<double, 2>{bisect(-100.0, tmin), bisect(tmin, 100.0)};
}

} // namespace

TEST(IntersectEllipsoid, UnitSphere) {
    const auto h = intersect_ellipsoid(ray({0, 0, -2}, {0, 0, 1}), ellipsoid({}, {1, 1, 1}));
    ASSERT_TRUE(h);
    EXPECT_DOUBLE_EQ(h->t_enter, 1.0);
    EXPECT_DOUBLE_EQ(h->t_exit, 3.0);
}

TEST(IntersectEllipsoid, LongAxisAlongRay) {
    const auto h = intersect_ellipsoid(ray({-5, 0, 0}, {1, 0, 0}), ellipsoid({}, {2, 1, 1}));
    ASSERT_TRUE(h);
    EXPECT_DOUBLE_EQ(h->t_enter, 3.0);
    EXPECT_DOUBLE_EQ(h->t_exit, 7.0);
}

TEST(IntersectEllipsoid, OriginInsideClampsEnter) {
    Ray r = ray({0.1, 0.2, 0.3}, {0.3, -1, 0.5});
    r.t_min = 0.0;
    const auto h = intersect_ellipsoid(r, ellipsoid({0.1, 0.2, 0.3}, {1, 2, 0.5}));
    ASSERT_TRUE(h);
    EXPECT_EQ(h->t_enter, 0.0);
    EXPECT_GT(h->t_exit, 0.0);
}

TEST(IntersectEllipsoid, BehindOriginIsMiss) {
    EXPECT_FALSE(intersect_ellipsoid(ray({0, 0, 5}, {0, 0, 1}), ellipsoid({}, {1, 1, 1})));
}

TEST(IntersectEllipsoid, TangentIsMiss) {
    EXPECT_FALSE(intersect_ellipsoid(ray({1, 0, -5}, {0, 0, 1}), ellipsoid({}, {1, 1, 1})));
    EXPECT_FALSE(intersect_ellipsoid(ray({1.5, 0, -5}, {0, 0, 1}), ellipsoid({}, {1, 1, 1})));
}

TEST(IntersectEllipsoid, TMaxClampsExit) {
    Ray r = ray({0, 0, -2}, {0, 0, 1});
    r.t_max = 2.0;
    const auto h = intersect_ellipsoid(r, ellipsoid({}, {1, 1, 1}));
    ASSERT_TRUE(h);
    EXPECT_EQ(h->t_exit, 2.0);
    r.t_max = 0.5;
    EXPECT_FALSE(intersect_ellipsoid(r, ellipsoid({}, {1, 1, 1})));
}

TEST(IntersectEllipsoid, FarAwayPrimitiveIsStable) {
    // Large |b| with a small chord: the naive quadratic formula loses the near root.
    const auto h = intersect_ellipsoid(ray({0, 0, 0}, {0, 0, 1}), ellipsoid({0, 0, 1e6}, {1e-3, 1e-3, 1e-3}));
    ASSERT_TRUE(h);
    EXPECT_NEAR(h->t_enter, 1e6 - 1e-3, 1e-9);
    EXPECT_NEAR(h->t_exit, 1e6 + 1e-3, 1e-9);
}

TEST(IntersectEllipsoid, AgreesWithBisectionRootFinder) {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    int hits = 0;
    for (int i = 0; i < 10000; ++i) {
        const auto p = ellipsoid({u(rng), u(rng), u(rng)}, {0.2 + std::abs(u(rng)), 0.2 + std::abs(u(rng)), 0.2 + std::abs(u(rng))},
                                 Quat{u(rng), u(rng), u(rng), u(rng)}.normalized());
        // Aimed near the ellipsoid so that most rays hit.
        const Vec3 origin = Vec3{u(rng), u(rng), u(rng)} * 3.0;
        Ray r = ray(origin, p.mean + Vec3{u(rng), u(rng), u(rng)} * 0.5 - origin);
        r.t_min = -kInf;
        const auto h = intersect_ellipsoid(r, p);
        const auto ref = bisection_roots(r, p);
        ASSERT_EQ(h.has_value(), ref.has_value()) << i;
        if (!h) continue;
        ++hits;
        EXPECT_NEAR(h->t_enter, (*ref)[0], 1e-9);
        EXPECT_NEAR(h->t_exit, (*ref)[1], 1e-9);
    }
    EXPECT_GT(hits, 1000);
}

TEST(IntersectEllipsoid, RigidTransformInvariant) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int i = 0; i < 1000; ++i) {
        const auto p = ellipsoid({u(rng), u(rng), u(rng)}, {0.5 + std::abs(u(rng)), 0.5, 0.3 + std::abs(u(rng))},
                                 Quat{u(rng), u(rng), u(rng), u(rng)}.normalized());
        const Ray r = ray(Vec3{u(rng), u(rng), u(rng)} * 0.3 - Vec3{0, 0, 4}, {u(rng) * 0.2, u(rng) * 0.2, 1});
        const Quat g = Quat{u(rng), u(rng), u(rng), u(rng)}.normalized();
        const Mat3 gr = g.to_matrix();
        const Vec3 shift{u(rng) * 10, u(rng) * 10, u(rng) * 10};
        auto q = p;
        q.mean = gr * p.mean + shift;
        q.rotation = (g * p.rotation).normalized();
        Ray s = r;
        s.origin = gr * r.origin + shift;
        s.direction = gr * r.direction;
        const auto a = intersect_ellipsoid(r, p), b = intersect_ellipsoid(s, q);
        ASSERT_EQ(a.has_value(), b.has_value());
        if (!a) continue;
        EXPECT_NEAR(a->t_enter, b->t_enter, 1e-9);
        EXPECT_NEAR(a->t_exit, b->t_exit, 1e-9);
    }
}

TEST(Aabb, IdentityRotation) {
    const Aabb b = aabb_of(ellipsoid({1, 2, 3}, {1, 2, 3}));
    test::expect_near((b.hi - b.lo) * 0.5, {1, 2, 3}, 1e-11);
    test::expect_near((b.hi + b.lo) * 0.5, {1, 2, 3}, 1e-15);
}

TEST(Aabb, QuarterTurnSwapsAxes) {
    const Aabb b = aabb_of(ellipsoid({}, {1, 2, 3}, Quat::from_axis_angle({0, 0, 1}, kPi / 2)));
    test::expect_near((b.hi - b.lo) * 0.5, {2, 1, 3}, 1e-11);
}

TEST(Aabb, EighthTurnOfRoundSection) {
    const Aabb b = aabb_of(ellipsoid({}, {1, 1, 3}, Quat::from_axis_angle({0, 0, 1}, kPi / 4)));
    test::expect_near((b.hi - b.lo) * 0.5, {1, 1, 3}, 1e-11);
}

TEST(Aabb, ContainsSurfacePoints) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int k = 0; k < 20; ++k) {
        const auto p = ellipsoid({n(rng), n(rng), n(rng)}, {0.1 + std::abs(n(rng)), 0.1 + std::abs(n(rng)), 0.1 + std::abs(n(rng))},
                                 Quat{n(rng), n(rng), n(rng), n(rng)}.normalized());
        const Aabb box = aabb_of(p);
        const Mat3 m = p.rotation_matrix() * Mat3::diagonal(p.scale);
        for (int i = 0; i < 1000; ++i) EXPECT_TRUE(box.contains(p.mean + m * normalize(Vec3{n(rng), n(rng), n(rng)})));
    }
}

TEST(Aabb, SlabTest) {
    Aabb box;
    box.lo = {-1, -1, -1};
    box.hi = {1, 1, 1};
    const auto t = intersect_aabb(ray({0, 0, -3}, {0, 0, 1}), box);
    ASSERT_TRUE(t);
    EXPECT_DOUBLE_EQ((*t)[0], 2.0);
    EXPECT_DOUBLE_EQ((*t)[1], 4.0);
    EXPECT_FALSE(intersect_aabb(ray({2, 0, -3}, {0, 0, 1}), box));
    EXPECT_TRUE(intersect_aabb(ray({0.5, 0.5, -3}, {0, 0, 1}), box)); // zero direction components
}

namespace {
CameraModel camera(CameraKind kind) {
    CameraModel c;
    c.kind = kind;
    c.width = 200;
    c.height = 100;
    c.fx = c.fy = 120.0;
    c.cx = 100.0;
    c.cy = 50.0;
    c.fisheye_f = 40.0;
    c.pose = look_at({1, 2, 3}, {0, 0, 0});
    return c;
}
} // namespace

TEST(GenerateRay, PrincipalPointLooksForward) {
    const CameraModel c = camera(CameraKind::pinhole);
    const Ray r = generate_ray(c, c.cx, c.cy);
    test::expect_near(r.direction, c.pose.forward(), 1e-15);
    test::expect_near(r.origin, {1, 2, 3}, 0.0);
}

TEST(GenerateRay, ZeroApertureThinLensIsPinhole) {
    const CameraModel pin = camera(CameraKind::pinhole);
    CameraModel lens = camera(CameraKind::thin_lens);
    lens.aperture_radius = 0.0;
    for (const auto &[px, py] : {std::pair{3.2, 7.9}, std::pair{199.5, 0.1}}) {
        const Ray a = generate_ray(pin, px, py), b = generate_ray(lens, px, py, {0.7, -0.2});
        test::expect_near(a.origin, b.origin, 0.0);
        test::expect_near(a.direction, b.direction, 0.0);
    }
}

TEST(GenerateRay, ThinLensRaysMeetOnFocusPlane) {
    CameraModel c = camera(CameraKind::thin_lens);
    c.aperture_radius = 0.2;
    c.focus_distance = 2.5;
    const Ray center = generate_ray(c, 40.3, 60.7, {0.0, 0.0});
    const Ray off = generate_ray(c, 40.3, 60.7, {0.6, -0.5});
    EXPECT_GT(norm(center.origin - off.origin), 0.05);
    // Both rays pass through the same point at depth focus_distance along the camera axis.
    const Vec3 f = c.pose.forward();
    const Vec3 pa = center.at((2.5 - dot(center.origin - c.pose.translation, f)) / dot(center.direction, f));
    const Vec3 pb = off.at((2.5 - dot(off.origin - c.pose.translation, f)) / dot(off.direction, f));
    test::expect_near(pa, pb, 1e-12);
}

TEST(GenerateRay, FisheyeQuarterTurnIsPerpendicular) {
    const CameraModel c = camera(CameraKind::fisheye_equidistant);
    const Ray r = generate_ray(c, c.cx + c.fisheye_f * kPi / 2.0, c.cy);
    EXPECT_NEAR(dot(r.direction, c.pose.forward()), 0.0, 1e-12);
}

TEST(GenerateRay, FisheyeBeyondHemisphereLimit) {
    CameraModel c = camera(CameraKind::fisheye_equidistant);
    c.fisheye_f = 20.0; // theta reaches pi inside the image
    EXPECT_THROW(generate_ray(c, c.cx + 20.0 * kPi + 1.0, c.cy), DomainError);
    EXPECT_NO_THROW(generate_ray(c, c.cx + 20.0 * kPi - 1.0, c.cy));
}

TEST(GenerateRay, OutsideImageRejected) {
    const CameraModel c = camera(CameraKind::pinhole);
    EXPECT_THROW(generate_ray(c, 200.0, 10.0), DomainError);
    EXPECT_THROW(generate_ray(c, -0.1, 10.0), DomainError);
}

TEST(JitterPixel, DisabledReturnsCenter) {
    SplitMix64 rng(1);
    const auto [x, y] = jitter_pixel(3, 4, rng, false);
    EXPECT_EQ(x, 3.5);
    EXPECT_EQ(y, 4.5);
}

TEST(JitterPixel, StaysInsidePixel) {
    SplitMix64 rng(9);
    for (int i = 0; i < 10000; ++i) {
        const auto [x, y] = jitter_pixel(3, 4, rng);
        EXPECT_GE(x, 3.0);
        EXPECT_LT(x, 4.0);
        EXPECT_GE(y, 4.0);
        EXPECT_LT(y, 5.0);
    }
}

TEST(JitterPixel, SeedReproducible) {
    SplitMix64 a(42), b(42);
    for (int i = 0; i < 100; ++i) EXPECT_EQ(jitter_pixel(0, 0, a), jitter_pixel(0, 0, b));
}
