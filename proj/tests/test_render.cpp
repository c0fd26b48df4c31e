// SPDX-License-Identifier: Apache-2.0

#include "helpers.hpp"

#include <cmath>
#include <cstring>
#include <random>

using namespace ever;
using test::ray;

namespace {

/// Fig. 2 layout: A = red over [0, 2], B = blue over [1, 3], both sigma = 1.
std::vector<RayEvent> overlap_events() {
    auto a = test::slab_events(0.0, 2.0, 1.0, {1, 0, 0}, 0);
    auto b = test::slab_events(1.0, 3.0, 1.0, {0, 0, 1}, 1);
    a.insert(a.end(), b.begin(), b.end());
    std::sort(a.begin(), a.end(), event_before);
    return a;
}

/// Spheres realizing the Fig. 2 intervals along the +z axis from the origin.
Scene overlap_scene() {
    return test::scene_of({test::sphere({0, 0, 1}, 1.0, 1.0, {0.9, 0.05, 0.05}), test::sphere({0, 0, 2}, 1.0, 1.0, {0.05, 0.05, 0.9})});
}

} // namespace

TEST(BuildEvents, SinglePair) {
    Scene s = test::scene_of({test::sphere({0, 0, 2}, 1.0, 2.0, {1, 0, 0})});
    const auto ev = build_events({{1.0, 3.0, 0}}, s, {0, 0, 1});
    ASSERT_EQ(ev.size(), 2u);
    EXPECT_EQ(ev[0].kind, EventKind::enter);
    EXPECT_EQ(ev[0].t, 1.0);
    EXPECT_NEAR(ev[0].delta_sigma, 2.0, 1e-12);
    const Rgb c = eval_color(s.primitives[0], {0, 0, 1}, 0);
    test::expect_near(ev[0].delta_premul, c * 2.0, 1e-12);
    EXPECT_NEAR(c.x, 1.0, 1e-12);
    EXPECT_EQ(ev[1].kind, EventKind::exit);
    EXPECT_EQ(ev[1].t, 3.0);
    EXPECT_NEAR(ev[1].delta_sigma, -2.0, 1e-12);
    test::expect_near(ev[1].delta_premul, c * -2.0, 1e-12);
}

TEST(BuildEvents, EqualEntersOrderedByIndex) {
    const Scene s = test::scene_of({test::sphere({}, 1, 1, {1, 0, 0}), test::sphere({}, 1, 1, {0, 1, 0}), test::sphere({}, 1, 1, {0, 0, 1})});
    const auto ev = build_events({{1.0, 4.0, 2}, {1.0, 3.0, 0}, {1.0, 2.0, 1}}, s, {0, 0, 1});
    ASSERT_EQ(ev.size(), 6u);
    EXPECT_EQ(ev[0].primitive_index, 0u);
    EXPECT_EQ(ev[1].primitive_index, 1u);
    EXPECT_EQ(ev[2].primitive_index, 2u);
}

TEST(BuildEvents, EnterBeforeExitAtSameT) {
    const Scene s = test::scene_of({test::sphere({}, 1, 1, {1, 0, 0}), test::sphere({}, 1, 1, {0, 1, 0})});
    const auto ev = build_events({{0.0, 1.0, 1}, {1.0, 2.0, 0}}, s, {0, 0, 1});
    EXPECT_EQ(ev[1].kind, EventKind::enter);
    EXPECT_EQ(ev[1].primitive_index, 0u);
    EXPECT_EQ(ev[2].kind, EventKind::exit);
}

TEST(BuildEvents, OverlapOrder) {
    const Scene s = overlap_scene();
    const auto ev = build_events({{1.0, 3.0, 0}, {2.0, 4.0, 1}}, s, {0, 0, 1});
    ASSERT_EQ(ev.size(), 4u);
    EXPECT_TRUE(ev[0].kind == EventKind::enter && ev[0].primitive_index == 0);
    EXPECT_TRUE(ev[1].kind == EventKind::enter && ev[1].primitive_index == 1);
    EXPECT_TRUE(ev[2].kind == EventKind::exit && ev[2].primitive_index == 0);
    EXPECT_TRUE(ev[3].kind == EventKind::exit && ev[3].primitive_index == 1);
}

TEST(CompositeRay, NoEventsGivesBackground) {
    const auto r = composite_ray({}, {0.2, 0.3, 0.4});
    test::expect_near(r.color, {0.2, 0.3, 0.4}, 0.0);
    EXPECT_EQ(r.transmittance, 1.0);
}

TEST(CompositeRay, SingleSlab) {
    const auto r = composite_ray(test::slab_events(1.0, 3.0, 1.0, {1, 0, 0}, 0), {0, 0, 0});
    EXPECT_NEAR(r.color.x, 1.0 - std::exp(-2.0), 1e-15);
    EXPECT_NEAR(r.color.x, 0.86466, 1e-5);
    EXPECT_EQ(r.color.y, 0.0);
    EXPECT_NEAR(r.transmittance, std::exp(-2.0), 1e-15);
    EXPECT_NEAR(r.transmittance, 0.13534, 1e-5);
}

TEST(CompositeRay, OverlapSegments) {
    Compositor comp(0.0);
    const auto ev = overlap_events();
    std::vector<double> sigmas;
    std::vector<Rgb> colors;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        comp.push(ev[i]);
        if (i + 1 < ev.size()) {
            sigmas.push_back(comp.state().sigma_running);
            colors.push_back(comp.state().premul_running / comp.state().sigma_running);
        }
    }
    ASSERT_EQ(sigmas.size(), 3u);
    EXPECT_DOUBLE_EQ(sigmas[0], 1.0);
    EXPECT_DOUBLE_EQ(sigmas[1], 2.0);
    EXPECT_DOUBLE_EQ(sigmas[2], 1.0);
    test::expect_near(colors[0], {1, 0, 0}, 1e-15);
    test::expect_near(colors[1], {0.5, 0, 0.5}, 1e-15);
    test::expect_near(colors[2], {0, 0, 1}, 1e-15);

    // Closed form of the three segments.
    const double e1 = std::exp(-1.0), e2 = std::exp(-2.0);
    const Rgb want = Rgb{1, 0, 0} * (1 - e1) + Rgb{0.5, 0, 0.5} * (e1 * (1 - e2)) + Rgb{0, 0, 1} * (e1 * e2 * (1 - e1));
    test::expect_near(comp.finish({}), want, 1e-15);
}

TEST(CompositeRay, OverlapMatchesQuadrature) {
    const Scene s = overlap_scene();
    const Ray r = ray({0, 0, 0}, {0, 0, 1});
    const auto pairs = intersect_all(s, r);
    ASSERT_EQ(pairs.size(), 2u);
    EXPECT_DOUBLE_EQ(pairs[0].t_enter, 0.0);
    EXPECT_DOUBLE_EQ(pairs[1].t_exit, 3.0);
    const Rgb exact = composite_ray(build_events(pairs, s, r.direction), s.background, 0.0).color;
    QuadratureOptions q;
    q.refine_levels = 40;
    test::expect_near(exact, quadrature_render(s, r, 1 << 12, q), 1e-10);
}

TEST(CompositeRay, TelescopingTransmittance) {
    std::mt19937_64 rng(21);
    for (int k = 0; k < 50; ++k) {
        const Scene s = random_scene(rng, 20);
        const Ray r = random_ray(rng);
        const auto ev = build_events(intersect_all(s, r), s, r.direction);
        double optical = 0.0, sigma = 0.0;
        int active = 0;
        for (std::size_t i = 0; i < ev.size(); ++i) {
            if (i > 0) optical += sigma * (ev[i].t - ev[i - 1].t);
            sigma += ev[i].delta_sigma;
            active += ev[i].kind == EventKind::enter ? 1 : -1;
            if (active == 0) sigma = 0.0;
        }
        EXPECT_NEAR(composite_ray(ev, {}, 0.0).transmittance, std::exp(-optical), 1e-12);
    }
}

TEST(CompositeRay, EnergyBound) {
    std::mt19937_64 rng(22);
    for (int k = 0; k < 100; ++k) {
        Scene s = random_scene(rng, 30, 0);
        s.background = {};
        for (auto &p : s.primitives) p.sh[0] = Rgb{std::min(p.sh[0].x, 3.0), std::min(p.sh[0].y, 3.0), std::min(p.sh[0].z, 3.0)};
        const Ray r = random_ray(rng);
        const auto res = composite_ray(build_events(intersect_all(s, r), s, r.direction), s.background, 0.0);
        EXPECT_LE(max_component(res.color), 1.0);
        EXPECT_GT(res.transmittance, 0.0);
        EXPECT_LE(res.transmittance, 1.0);
    }
}

TEST(CompositeRay, EarlyStopBoundsError) {
    std::mt19937_64 rng(23);
    for (int k = 0; k < 50; ++k) {
        const Scene s = random_scene(rng, 40);
        const Ray r = random_ray(rng);
        const auto ev = build_events(intersect_all(s, r), s, r.direction);
        const auto full = composite_ray(ev, s.background, 0.0);
        const auto early = composite_ray(ev, s.background, 1e-2);
        // Light lost past the stop is at most T_stop times the brightest remaining color.
        EXPECT_LE(max_component(vabs(full.color - early.color)), 1e-2 * 10.0);
    }
}

TEST(RenderRay, StreamingMatchesBruteForce) {
    std::mt19937_64 rng(24);
    for (int k = 0; k < 20; ++k) {
        const Scene s = random_scene(rng, 64);
        const Bvh bvh = Bvh::build(s);
        for (int i = 0; i < 20; ++i) {
            const Ray r = random_ray(rng);
            for (double t_stop : {0.0, 1e-4, 0.1}) {
                const auto a = render_ray(bvh, s, r, t_stop);
                const auto b = bruteforce_render(s, r, t_stop);
                test::expect_near(a.color, b.color, 1e-12);
                EXPECT_NEAR(a.transmittance, b.transmittance, 1e-12);
            }
        }
    }
}

TEST(RenderRay, TapeCapEnforced) {
    std::vector<EllipsoidPrimitive> prims;
    for (int i = 0; i < 5000; ++i) prims.push_back(test::sphere({0, 0, 10.0 + 0.001 * i}, 1.0, 1e-6, {1, 1, 1}));
    const Scene s = test::scene_of(prims);
    IntersectionTape tape;
    EXPECT_THROW(render_ray(Bvh::build(s), s, ray({0, 0, 0}, {0, 0, 1}), 0.0, &tape), Error);
}

TEST(RenderImage, EmptySceneIsBackground) {
    Scene s;
    s.background = {0.2, 0.2, 0.2};
    CameraModel cam;
    cam.width = cam.height = 8;
    const Image img = render_image(s, cam);
    for (const auto &p : img.pixels) test::expect_near(p, {0.2, 0.2, 0.2}, 0.0);
}

TEST(RenderImage, DeterministicAndThreadIndependent) {
    std::mt19937_64 rng(25);
    const Scene s = random_scene(rng, 40);
    const CameraModel cam = probe_camera(48);
    RenderSettings one;
    one.threads = 1;
    RenderSettings many = one;
    many.threads = 4;
    const Image a = render_image(s, cam, one), b = render_image(s, cam, one), c = render_image(s, cam, many);
    EXPECT_EQ(std::memcmp(a.pixels.data(), b.pixels.data(), a.pixels.size() * sizeof(Rgb)), 0);
    EXPECT_EQ(std::memcmp(a.pixels.data(), c.pixels.data(), a.pixels.size() * sizeof(Rgb)), 0);

    RenderSettings jit = one;
    jit.jitter = true;
    jit.spp = 4;
    jit.seed = 99;
    const Image d = render_image(s, cam, jit);
    jit.threads = 3;
    const Image e = render_image(s, cam, jit);
    EXPECT_EQ(std::memcmp(d.pixels.data(), e.pixels.data(), d.pixels.size() * sizeof(Rgb)), 0);
}

TEST(RenderImage, PermutationInvariant) {
    std::mt19937_64 rng(26);
    for (int k = 0; k < 10; ++k) {
        const Scene s = random_scene(rng, 50);
        std::vector<Ray> rays;
        for (int i = 0; i < 50; ++i) rays.push_back(random_ray(rng));
        EXPECT_LE(permutation_error(s, rays, rng), 1e-12);
    }
}

TEST(OpacityProfile, UnitSphereValues) {
    const auto p = make_primitive({}, {1, 1, 1}, 0.5, {1, 1, 1}, 0);
    const auto v = opacity_profile(p, {0, 0, 1}, {0.0, 1.0, 0.6}, 1.0);
    EXPECT_NEAR(v[0], 1.0 - std::exp(-2.0), 1e-14);
    EXPECT_NEAR(v[0], 0.8647, 1e-4);
    EXPECT_EQ(v[1], 0.0);
    EXPECT_NEAR(v[2], 1.0 - std::exp(-2.0 * 0.8), 1e-12);
    EXPECT_NEAR(opacity_profile(p, {0, 0, 1}, {0.0}, 100.0)[0], 1.0, 1e-15);
    EXPECT_EQ(opacity_profile(p, {0, 0, 1}, {0.0, 0.5}, 0.0)[1], 0.0);
}

TEST(RenderRay, TapeReplayMatchesForward) {
    std::mt19937_64 rng(27);
    for (int k = 0; k < 10; ++k) {
        const Scene s = random_scene(rng, 64);
        const Bvh bvh = Bvh::build(s);
        for (int i = 0; i < 20; ++i) {
            const Ray r = random_ray(rng);
            for (double t_stop : {0.0, 1e-2}) {
                IntersectionTape tape;
                const auto fwd = render_ray(bvh, s, r, t_stop, &tape);
                const auto rep = replay_tape(tape, s, r, t_stop);
                test::expect_near(fwd.color, rep.color, 1e-12);
                EXPECT_NEAR(fwd.transmittance, rep.transmittance, 1e-12);
                EXPECT_LE(tape.pairs.size(), kMaxTapeEntries);
            }
        }
    }
}

TEST(RenderRay, EarlyStopTracesFewerPairs) {
    std::vector<EllipsoidPrimitive> prims;
    for (int i = 0; i < 200; ++i) prims.push_back(test::sphere({0, 0, 3.0 + 0.5 * i}, 1.0, 5.0, {0.5, 0.5, 0.5}));
    const Scene s = test::scene_of(prims);
    const Bvh bvh = Bvh::build(s);
    IntersectionTape tape;
    render_ray(bvh, s, ray({0, 0, 0}, {0, 0, 1}), 1e-4, &tape);
    EXPECT_TRUE(tape.stopped);
    EXPECT_LT(tape.pairs.size(), 20u);
}
