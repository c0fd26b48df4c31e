// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/bvh.hpp"
#include "ever/camera.hpp"
#include "ever/render.hpp"
#include "ever/scene.hpp"
#include "ever/splat.hpp"

#include <cmath>
#include <vector>

namespace ever {

/// Cameras on a horizontal circle (fixed +y world up) looking at `center`.
/// Frame k sits at angle start + (end - start) k / (n_frames - 1), measured
/// from +z towards +x.
struct OrbitSpec {
    Vec3 center;
    double radius = 4.0;
    int n_frames = 512;
    int scanline_row = 0;
    double angle_start = 0.0;
    double angle_end = 2.0 * kPi;
    int width = 128;
    int height = 1;
    double fov_x = 0.5; // horizontal field of view, radians
};

inline void validate_orbit(const OrbitSpec &o) {
    if (o.n_frames < 2) throw Error("orbit: n_frames must be >= 2");
    if (!(o.radius > 0.0)) throw Error("orbit: radius must be positive");
    if (o.width < 1 || o.height < 1) throw Error("orbit: image size must be positive");
    if (o.scanline_row < 0 || o.scanline_row >= o.height) throw Error("orbit: scanline_row outside image");
    if (!(o.fov_x > 0.0 && o.fov_x < kPi)) throw Error("orbit: fov_x must be in (0, pi)");
}

inline double orbit_angle(const OrbitSpec &o, int frame) {
    return o.angle_start + (o.angle_end - o.angle_start) * frame / (o.n_frames - 1);
}

inline CameraModel orbit_camera(const OrbitSpec &o, int frame) {
    const double a = orbit_angle(o, frame);
    CameraModel cam;
    cam.kind = CameraKind::pinhole;
    cam.width = o.width;
    cam.height = o.height;
    cam.fx = cam.fy = 0.5 * o.width / std::tan(0.5 * o.fov_x);
    cam.cx = 0.5 * o.width;
    cam.cy = 0.5 * o.height;
    const Vec3 eye = o.center + Vec3{std::sin(a), 0.0, std::cos(a)} * o.radius;
    cam.pose = look_at(eye, o.center);
    return cam;
}

/// One scanline per frame, frame k in row k.
inline Image render_epi(const Scene &scene, const OrbitSpec &o, RenderMode mode, const RenderSettings &settings = {}) {
    validate_orbit(o);
    const Bvh bvh = Bvh::build(scene);
    Image epi(o.width, o.n_frames);
    for (int k = 0; k < o.n_frames; ++k) {
        const Image frame = render_mode(mode, scene, bvh, orbit_camera(o, k), settings);
        for (int x = 0; x < o.width; ++x) epi.at(x, k) = frame.at(x, o.scanline_row);
    }
    return epi;
}

struct ContinuityReport {
    double max_jump = 0.0; // largest per-channel change between consecutive rows
    int jump_row = 0;      // the jump is between rows jump_row and jump_row + 1
    int jump_column = 0;
    double total_variation = 0.0; // sum over consecutive rows of the mean absolute change
};

inline ContinuityReport continuity(const Image &epi) {
    ContinuityReport r;
    for (int k = 0; k + 1 < epi.height; ++k) {
        double row_sum = 0.0;
        for (int x = 0; x < epi.width; ++x) {
            const Vec3 d = epi.at(x, k + 1) - epi.at(x, k);
            for (int c = 0; c < 3; ++c) {
                const double j = std::abs(d[c]);
                row_sum += j;
                if (j > r.max_jump) {
                    r.max_jump = j;
                    r.jump_row = k;
                    r.jump_column = x;
                }
            }
        }
        r.total_variation += row_sum / (3.0 * epi.width);
    }
    return r;
}

/// Fraction of the ray's color coming from segments where two or more
/// primitives overlap, under exact interval compositing (no early stop).
inline double overlap_mixing_weight(const Scene &scene, const Ray &ray) {
    const auto pairs = intersect_all(scene, ray);
    const auto events = build_events(pairs, scene, ray.direction);
    double sigma = 0.0, transmittance = 1.0, mixed = 0.0;
    int active = 0;
    for (std::size_t j = 0; j < events.size(); ++j) {
        if (j > 0) {
            const double dt = events[j].t - events[j - 1].t;
            const double w = transmittance * -std::expm1(-sigma * dt);
            if (active >= 2) mixed += w;
            transmittance *= std::exp(-sigma * dt);
        }
        sigma += events[j].delta_sigma;
        active += events[j].kind == EventKind::enter ? 1 : -1;
        if (active == 0) sigma = 0.0;
    }
    return mixed;
}

/// Longest contiguous run of columns, over all frames, whose overlap mixing
/// weight exceeds `threshold`.
inline int blend_band_run(const Scene &scene, const OrbitSpec &o, double threshold = 1e-3) {
    validate_orbit(o);
    int best = 0;
    for (int k = 0; k < o.n_frames; ++k) {
        const CameraModel cam = orbit_camera(o, k);
        int run = 0;
        for (int x = 0; x < o.width; ++x) {
            const Ray ray = generate_ray(cam, x + 0.5, o.scanline_row + 0.5);
            run = overlap_mixing_weight(scene, ray) > threshold ? run + 1 : 0;
            best = std::max(best, run);
        }
    }
    return best;
}

/// Two overlapping near-spheres, red at -x and blue at +x, in the y = 0 plane.
/// Distinct semi-axes keep min(s) differentiable for the gradient check.
inline Scene flatland_scene() {
    Scene s;
    s.sh_degree = 0;
    s.sh_degree_active = 0;
    s.background = {0.0, 0.0, 0.0};
    s.primitives.push_back(make_primitive({-0.3, 0.0, 0.0}, {0.5, 0.48, 0.52}, 0.6, {0.9, 0.02, 0.02}, 0));
    s.primitives.push_back(make_primitive({0.3, 0.0, 0.0}, {0.5, 0.48, 0.52}, 0.6, {0.02, 0.02, 0.9}, 0));
    return s;
}

/// Orbit arc around the angle where the two flatland spheres swap depth order.
inline OrbitSpec flatland_orbit(int n_frames = 512) {
    OrbitSpec o;
    o.n_frames = n_frames;
    o.angle_start = -0.05;
    o.angle_end = 0.05;
    o.width = 128;
    o.height = 1;
    o.scanline_row = 0;
    return o;
}

} // namespace ever
