// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

#include <random>

using namespace ever;

TEST(Contraction, IdentityInsideUnitBall) {
    test::expect_near(uncontract({0.3, -0.2, 0.5}), {0.3, -0.2, 0.5}, 0.0);
    test::expect_near(contract({0.3, -0.2, 0.5}), {0.3, -0.2, 0.5}, 0.0);
}

TEST(Contraction, OutsideExample) {
    test::expect_near(uncontract({1.5, 0, 0}), {2, 0, 0}, 1e-15);
    test::expect_near(contract({2, 0, 0}), {1.5, 0, 0}, 1e-15);
}

TEST(Contraction, BlowsUpAtBoundary) {
    EXPECT_GT(norm(uncontract({1.999999, 0, 0})), 1e5);
    EXPECT_FALSE(std::isfinite(norm(uncontract({2, 0, 0}))));
}

TEST(Contraction, RoundTrip) {
    std::mt19937_64 rng(71);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.99);
    for (int i = 0; i < 100000; ++i) {
        Vec3 d{n(rng), n(rng), n(rng)};
        const Vec3 z = normalize(d) * u(rng);
        const Vec3 back = contract(uncontract(z));
        EXPECT_LT(norm(back - z), 1e-9 * std::max(1.0, norm(uncontract(z)))) << i;
        if (HasFailure()) break;
    }
}

TEST(Contraction, JacobianMatchesFiniteDifferences) {
    const Vec3 z{1.2, -0.4, 0.7};
    const Mat3 j = uncontract_jacobian(z);
    const double h = 1e-6;
    for (int c = 0; c < 3; ++c) {
        Vec3 dz;
        dz[c] = h;
        const Vec3 col = (uncontract(z + dz) - uncontract(z - dz)) / (2 * h);
        for (int r = 0; r < 3; ++r) EXPECT_NEAR(j(r, c), col[r], 1e-6);
    }
}

TEST(Seeding, CountAndBounds) {
    std::mt19937_64 rng(72);
    SeedBounds b;
    b.center = {1, 0, 0};
    b.radius = 2.0;
    const auto prims = seed_inverse_contraction(500, b, rng);
    ASSERT_EQ(prims.size(), 500u);
    int inside = 0;
    for (const auto &p : prims) {
        EXPECT_GT(p.scale.x, 0.0);
        EXPECT_EQ(p.scale.x, p.scale.z);
        EXPECT_LE(p.scale.x, kDefaultMaxPrimitiveSize);
        inside += norm(p.mean - b.center) <= b.radius;
    }
    // Half the contracted ball's volume lies inside radius 2^(2/3), i.e. inside r = 1 about 1/8.
    EXPECT_NEAR(inside / 500.0, 0.125, 0.05);
}

TEST(Seeding, OuterPrimitivesAreLarger) {
    std::mt19937_64 rng(73);
    const auto prims = seed_inverse_contraction(400, {}, rng);
    double inner = 0, outer = 0;
    int ni = 0, no = 0;
    for (const auto &p : prims) {
        if (norm(p.mean) < 1.0) inner += p.scale.x, ++ni;
        else if (norm(p.mean) > 3.0) outer += p.scale.x, ++no;
    }
    ASSERT_GT(ni, 0);
    ASSERT_GT(no, 0);
    EXPECT_GT(outer / no, inner / ni);
}
