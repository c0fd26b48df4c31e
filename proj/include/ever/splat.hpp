// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/bvh.hpp"
#include "ever/render.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace ever {

/// Composites each hit primitive as an independent slab with alpha
/// 1 - exp(-sigma chord), front to back in the given order. Overlap between
/// primitives is ignored.
inline Rgb composite_slabs(const Scene &scene, const Ray &ray, const std::vector<HitPair> &ordered, double t_stop) {
    Rgb color;
    double transmittance = 1.0;
    for (const auto &h : ordered) {
        if (transmittance < t_stop) break;
        const auto &p = scene.primitives[h.primitive_index];
        const double optical = sigma_from_alpha(p.alpha, p.scale) * (h.t_exit - h.t_enter);
        const double a = -std::expm1(-optical);
        color += eval_color(p, ray.direction, scene.sh_degree_active) * (transmittance * a);
        transmittance *= std::exp(-optical);
    }
    return color + scene.background * transmittance;
}

/// Per-ray sorting by entry distance without interval mixing.
inline Rgb no_mixing_ray(const Scene &scene, const Bvh &bvh, const Ray &ray, double t_stop = kDefaultTransmittanceStop) {
    return composite_slabs(scene, ray, trace_pairs(bvh, scene, ray), t_stop);
}

/// Rank of every primitive in one global front-to-back order by the camera
/// space depth of its mean.
inline std::vector<std::uint32_t> depth_ranks(const Scene &scene, const CameraModel &cam) {
    const auto n = scene.primitives.size();
    std::vector<double> depth(n);
    const Vec3 fwd = cam.pose.forward();
    for (std::size_t i = 0; i < n; ++i) depth[i] = dot(scene.primitives[i].mean - cam.pose.translation, fwd);
    std::vector<std::uint32_t> order(n), rank(n);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return depth[a] < depth[b]; });
    for (std::size_t r = 0; r < n; ++r) rank[order[r]] = static_cast<std::uint32_t>(r);
    return rank;
}

inline Rgb splatted_ray(const Scene &scene, const Bvh &bvh, const Ray &ray, const std::vector<std::uint32_t> &rank,
                        double t_stop = kDefaultTransmittanceStop) {
    auto hits = trace_pairs(bvh, scene, ray);
    std::sort(hits.begin(), hits.end(),
              [&](const HitPair &a, const HitPair &b) { return rank[a.primitive_index] < rank[b.primitive_index]; });
    return composite_slabs(scene, ray, hits, t_stop);
}

/// Splatting-style ablation: one global depth sort per frame.
inline Image render_splatted(const Scene &scene, const Bvh &bvh, const CameraModel &cam, const RenderSettings &settings = {}) {
    const auto rank = depth_ranks(scene, cam);
    return render_with(cam, settings, [&](const Ray &ray) { return splatted_ray(scene, bvh, ray, rank, settings.t_stop); });
}

inline Image render_splatted(const Scene &scene, const CameraModel &cam, const RenderSettings &settings = {}) {
    return render_splatted(scene, Bvh::build(scene), cam, settings);
}

/// Per-ray sorted ablation without color mixing.
inline Image render_no_mixing(const Scene &scene, const Bvh &bvh, const CameraModel &cam, const RenderSettings &settings = {}) {
    return render_with(cam, settings, [&](const Ray &ray) { return no_mixing_ray(scene, bvh, ray, settings.t_stop); });
}

inline Image render_no_mixing(const Scene &scene, const CameraModel &cam, const RenderSettings &settings = {}) {
    return render_no_mixing(scene, Bvh::build(scene), cam, settings);
}

enum class RenderMode { exact, splatted, nomix };

inline RenderMode render_mode_from_string(const std::string &s) {
    if (s == "exact") return RenderMode::exact;
    if (s == "splatted") return RenderMode::splatted;
    if (s == "nomix" || s == "no_mixing") return RenderMode::nomix;
    throw Error("unknown render mode '" + s + "'");
}

inline Image render_mode(RenderMode mode, const Scene &scene, const Bvh &bvh, const CameraModel &cam,
                         const RenderSettings &settings = {}) {
    switch (mode) {
    case RenderMode::exact: return render_image(scene, bvh, cam, settings);
    case RenderMode::splatted: return render_splatted(scene, bvh, cam, settings);
    case RenderMode::nomix: return render_no_mixing(scene, bvh, cam, settings);
    }
    return {};
}

} // namespace ever
