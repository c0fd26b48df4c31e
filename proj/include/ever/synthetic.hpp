// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/optimizer.hpp"
#include "ever/render.hpp"
#include "ever/scene.hpp"

#include <random>
#include <string>

namespace ever {

struct SyntheticOptions {
    int n_primitives = 32;
    int n_train = 24;
    int n_test = 4;
    int resolution = 128;
    double camera_radius = 4.0;
    double fov = 0.7; // radians, horizontal and vertical
    std::uint64_t seed = 1;
};

/// Random ground-truth scene: anisotropic, rotated, SH degree 1 ellipsoids
/// inside the unit ball.
inline Scene synthetic_scene(const SyntheticOptions &opt) {
    std::mt19937_64 rng(opt.seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    Scene s;
    s.sh_degree = 1;
    s.sh_degree_active = 1;
    s.background = {0.0, 0.0, 0.0};
    for (int i = 0; i < opt.n_primitives; ++i) {
        Vec3 m;
        do m = {2.0 * u(rng) - 1.0, 2.0 * u(rng) - 1.0, 2.0 * u(rng) - 1.0};
        while (norm(m) > 1.0);
        const Vec3 scale{0.12 + 0.18 * u(rng), 0.12 + 0.18 * u(rng), 0.12 + 0.18 * u(rng)};
        const Quat q = Quat{n(rng), n(rng), n(rng), n(rng)}.normalized();
        const Rgb rgb{0.1 + 0.8 * u(rng), 0.1 + 0.8 * u(rng), 0.1 + 0.8 * u(rng)};
        auto p = make_primitive(m, scale, 0.3 + 0.6 * u(rng), rgb, 1, q);
        for (std::size_t k = 1; k < p.sh.size(); ++k) p.sh[k] = Rgb{n(rng), n(rng), n(rng)} * 0.1;
        s.primitives.push_back(p);
    }
    return s;
}

/// Cameras on a sphere around the origin: a Fibonacci spiral for training
/// views and a rotated spiral for held-out views.
inline std::vector<CameraModel> synthetic_cameras(const SyntheticOptions &opt, int count, double twist) {
    std::vector<CameraModel> cams;
    const double golden = kPi * (3.0 - std::sqrt(5.0));
    for (int i = 0; i < count; ++i) {
        const double y = 1.0 - 2.0 * (i + 0.5) / count;
        const double r = std::sqrt(1.0 - y * y);
        const double a = golden * i + twist;
        const Vec3 dir{r * std::cos(a), 0.8 * y, r * std::sin(a)};
        CameraModel c;
        c.width = c.height = opt.resolution;
        c.fx = c.fy = 0.5 * opt.resolution / std::tan(0.5 * opt.fov);
        c.cx = c.cy = 0.5 * opt.resolution;
        c.pose = look_at(normalize(dir) * opt.camera_radius, {0.0, 0.0, 0.0});
        cams.push_back(c);
    }
    return cams;
}

/// Ground-truth scene plus views rendered from it (pixel centers, no jitter).
inline Dataset synthetic_dataset(const Scene &truth, const SyntheticOptions &opt, int threads = 1) {
    Dataset ds;
    ds.background = truth.background;
    const Bvh bvh = Bvh::build(truth);
    RenderSettings rs;
    rs.threads = threads;
    auto add = [&](std::vector<View> &out, const std::vector<CameraModel> &cams, const char *prefix) {
        for (std::size_t i = 0; i < cams.size(); ++i) {
            View v;
            v.camera = cams[i];
            v.image = quantize_to_float(render_image(truth, bvh, cams[i], rs));
            v.name = std::string(prefix) + std::to_string(i) + ".bin";
            out.push_back(std::move(v));
        }
    };
    add(ds.train, synthetic_cameras(opt, opt.n_train, 0.0), "train_");
    add(ds.test, synthetic_cameras(opt, opt.n_test, 0.7), "test_");
    return ds;
}

/// Random scene for property checks: each primitive's mean is placed within
/// reach of an earlier one so that overlaps are common.
template <class Rng>
Scene random_scene(Rng &rng, int n_primitives, int sh_degree = 1) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    Scene s;
    s.sh_degree = sh_degree;
    s.sh_degree_active = sh_degree;
    s.background = {u(rng), u(rng), u(rng)};
    for (int i = 0; i < n_primitives; ++i) {
        const Vec3 scale{0.1 + 0.4 * u(rng), 0.1 + 0.4 * u(rng), 0.1 + 0.4 * u(rng)};
        Vec3 m{n(rng), n(rng), n(rng)};
        if (i == 0)
            m = m * 0.3;
        else {
            const auto &anchor = s.primitives[static_cast<std::size_t>(u(rng) * i)];
            m = anchor.mean + normalize(m) * (max_component(anchor.scale) * u(rng));
        }
        const Quat q = Quat{n(rng), n(rng), n(rng), n(rng)}.normalized();
        auto p = make_primitive(m, scale, 0.05 + 0.9 * u(rng), {u(rng), u(rng), u(rng)}, sh_degree, q);
        for (std::size_t k = 1; k < p.sh.size(); ++k) p.sh[k] = Rgb{n(rng), n(rng), n(rng)} * 0.2;
        s.primitives.push_back(p);
    }
    return s;
}

/// Ray from a random point on a sphere of radius 3 towards a random point near the origin.
template <class Rng>
Ray random_ray(Rng &rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Ray r;
    r.origin = normalize(Vec3{n(rng), n(rng), n(rng)}) * 3.0;
    const Vec3 target = Vec3{n(rng), n(rng), n(rng)} * 0.4;
    r.direction = normalize(target - r.origin);
    return r;
}

/// Ground truth with every parameter perturbed, plus `n_extra` faint random
/// primitives: the training start point.
inline Scene perturbed_copy(const Scene &truth, std::uint64_t seed, double mean_noise = 0.05, int n_extra = 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 1.0);
    Scene s = truth;
    for (auto &p : s.primitives) {
        p.mean += Vec3{n(rng), n(rng), n(rng)} * mean_noise;
        p.scale = {p.scale.x * std::exp(0.2 * n(rng)), p.scale.y * std::exp(0.2 * n(rng)), p.scale.z * std::exp(0.2 * n(rng))};
        p.rotation = (p.rotation * Quat::from_axis_angle({n(rng), n(rng), n(rng)}, 0.2 * n(rng))).normalized();
        p.alpha = std::clamp(p.alpha + 0.15 * n(rng), 0.05, 0.95);
        for (auto &c : p.sh) c += Rgb{n(rng), n(rng), n(rng)} * 0.1;
    }
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < n_extra; ++i) {
        const Vec3 m = Vec3{n(rng), n(rng), n(rng)} * 0.5;
        const Rgb rgb{u(rng), u(rng), u(rng)};
        s.primitives.push_back(make_primitive(m, Vec3{0.1, 0.1, 0.1} * (1.0 + u(rng)), 0.02, rgb, s.sh_degree));
    }
    return s;
}

} // namespace ever
