// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/backward.hpp"
#include "ever/bvh.hpp"
#include "ever/oracle.hpp"
#include "ever/render.hpp"
#include "ever/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <random>
#include <vector>

namespace ever {

/// Largest per-channel difference between the BVH renderer (no early stop)
/// and dense quadrature.
inline double oracle_error(const Scene &scene, const Bvh &bvh, const std::vector<Ray> &rays, int n_steps,
                           const QuadratureOptions &opts = {}) {
    double worst = 0.0;
    for (const auto &ray : rays) {
        const Rgb exact = render_ray(bvh, scene, ray, 0.0).color;
        const Rgb oracle = quadrature_render(scene, ray, n_steps, opts);
        worst = std::max(worst, max_component(vabs(exact - oracle)));
    }
    return worst;
}

/// Largest per-channel change in rendered color when the primitive list is shuffled.
template <class Rng>
double permutation_error(const Scene &scene, const std::vector<Ray> &rays, Rng &rng, double t_stop = kDefaultTransmittanceStop) {
    Scene shuffled = scene;
    std::shuffle(shuffled.primitives.begin(), shuffled.primitives.end(), rng);
    const Bvh a = Bvh::build(scene), b = Bvh::build(shuffled);
    double worst = 0.0;
    for (const auto &ray : rays)
        worst = std::max(worst, max_component(vabs(render_ray(a, scene, ray, t_stop).color -
                                                   render_ray(b, shuffled, ray, t_stop).color)));
    return worst;
}

struct CompletenessResult {
    bool sets_equal = true;
    double max_t_error = 0.0;
    std::size_t pairs = 0;
};

/// Compares BVH traversal against brute force, as sets keyed by primitive index.
inline CompletenessResult bvh_completeness(const Scene &scene, const Bvh &bvh, const std::vector<Ray> &rays) {
    CompletenessResult r;
    auto by_index = [](std::vector<HitPair> v) {
        std::sort(v.begin(), v.end(), [](const HitPair &a, const HitPair &b) { return a.primitive_index < b.primitive_index; });
        return v;
    };
    for (const auto &ray : rays) {
        const auto fast = by_index(trace_pairs(bvh, scene, ray));
        const auto slow = by_index(intersect_all(scene, ray));
        r.pairs += slow.size();
        if (fast.size() != slow.size()) {
            r.sets_equal = false;
            continue;
        }
        for (std::size_t i = 0; i < fast.size(); ++i) {
            if (fast[i].primitive_index != slow[i].primitive_index) {
                r.sets_equal = false;
                break;
            }
            r.max_t_error = std::max({r.max_t_error, std::abs(fast[i].t_enter - slow[i].t_enter),
                                      std::abs(fast[i].t_exit - slow[i].t_exit)});
        }
    }
    return r;
}

struct VerifyOptions {
    int rays = 16;
    int steps = 1 << 17;   // quadrature cells per ray
    int refine_levels = 12;
    int fd_resolution = 4; // probe camera is fd_resolution^2 pixels
    std::uint64_t seed = 0;
    double oracle_tolerance = 1e-6;
    double permutation_tolerance = 1e-12;
    double t_tolerance = 1e-12;
    double gradient_tolerance = 1e-3;
};

struct VerifyReport {
    double oracle = 0.0;
    double permutation = 0.0;
    bool bvh_sets_equal = true;
    double bvh_t = 0.0;
    double gradient = 0.0;
    std::size_t scenes = 0;

    bool oracle_ok(const VerifyOptions &o) const { return oracle < o.oracle_tolerance; }
    bool permutation_ok(const VerifyOptions &o) const { return permutation <= o.permutation_tolerance; }
    bool bvh_ok(const VerifyOptions &o) const { return bvh_sets_equal && bvh_t <= o.t_tolerance; }
    bool gradient_ok(const VerifyOptions &o) const { return gradient < o.gradient_tolerance; }
    bool ok(const VerifyOptions &o) const { return oracle_ok(o) && permutation_ok(o) && bvh_ok(o) && gradient_ok(o); }
};

/// Camera looking at the origin from +z, framing the unit ball.
inline CameraModel probe_camera(int resolution) {
    CameraModel cam;
    cam.width = cam.height = resolution;
    cam.fx = cam.fy = 0.5 * resolution / std::tan(0.35);
    cam.cx = cam.cy = 0.5 * resolution;
    cam.pose = look_at({0.3, 0.4, 4.0}, {0.0, 0.0, 0.0});
    return cam;
}

/// Runs every suite on one scene and folds the worst errors into `report`.
inline void verify_scene(const Scene &scene, const VerifyOptions &opt, std::uint64_t seed, VerifyReport &report) {
    SplitMix64 rng(opt.seed, seed);
    std::vector<Ray> rays;
    for (int i = 0; i < opt.rays; ++i) rays.push_back(random_ray(rng));
    const Bvh bvh = Bvh::build(scene);
    QuadratureOptions q;
    q.refine_levels = opt.refine_levels;
    report.oracle = std::max(report.oracle, oracle_error(scene, bvh, rays, opt.steps, q));
    report.permutation = std::max(report.permutation, permutation_error(scene, rays, rng));
    const auto c = bvh_completeness(scene, bvh, rays);
    report.bvh_sets_equal = report.bvh_sets_equal && c.sets_equal;
    report.bvh_t = std::max(report.bvh_t, c.max_t_error);
    if (opt.fd_resolution > 0)
        report.gradient =
            std::max(report.gradient, finite_difference_check(scene, probe_camera(opt.fd_resolution), rng()).max_rel_error);
    ++report.scenes;
}

inline void print_report(std::ostream &out, const VerifyReport &r, const VerifyOptions &o) {
    auto line = [&](const char *name, bool ok, double value, double tol) {
        out << (ok ? "pass " : "FAIL ") << name << " worst=" << value << " tolerance=" << tol << '\n';
    };
    out << "scenes " << r.scenes << '\n';
    line("oracle", r.oracle_ok(o), r.oracle, o.oracle_tolerance);
    line("permutation", r.permutation_ok(o), r.permutation, o.permutation_tolerance);
    out << (r.bvh_ok(o) ? "pass " : "FAIL ") << "bvh sets_equal=" << (r.bvh_sets_equal ? "yes" : "no")
        << " worst_t=" << r.bvh_t << " tolerance=" << o.t_tolerance << '\n';
    line("gradient", r.gradient_ok(o), r.gradient, o.gradient_tolerance);
}

} // namespace ever
