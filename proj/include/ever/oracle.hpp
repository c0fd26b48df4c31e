// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/bvh.hpp"
#include "ever/render.hpp"
#include "ever/scene.hpp"

#include <vector>

namespace ever {

/// Pointwise radiance field: density and density-weighted mean color of every
/// primitive containing x.
struct FieldSample {
    double sigma = 0.0;
    Rgb color;

    bool operator==(const FieldSample &) const = default;
};

/// Per-ray precomputation for repeated field queries along one view direction.
class FieldEvaluator {
  public:
    FieldEvaluator(const Scene &scene, const Vec3 &view_dir) {
        prims_.reserve(scene.primitives.size());
        for (const auto &p : scene.primitives) {
            const double s = sigma_from_alpha(p.alpha, p.scale);
            const double r = max_component(p.scale);
            prims_.push_back({p.mean, p.rotation_matrix(), cdiv(Vec3{1, 1, 1}, p.scale), r * r * (1.0 + 1e-12), s,
                              eval_color(p, view_dir, scene.sh_degree_active) * s});
        }
    }

    FieldSample operator()(const Vec3 &x) const {
        double sigma = 0.0;
        Rgb premul;
        for (const auto &p : prims_) {
            const Vec3 v = x - p.mean;
            if (dot(v, v) > p.bound_sq) continue;
            const Vec3 local = cmul(p.rot.transpose_mul(v), p.inv_scale);
            if (dot(local, local) > 1.0) continue;
            sigma += p.sigma;
            premul += p.premul;
        }
        if (!(sigma > 0.0)) return {};
        return {sigma, premul / sigma};
    }

  private:
    struct Prepared {
        Vec3 mean;
        Mat3 rot;
        Vec3 inv_scale;
        double bound_sq;
        double sigma;
        Rgb premul;
    };
    std::vector<Prepared> prims_;
};

/// Density and density-weighted mean color of the primitives containing x,
/// tested as |diag(1/s) R^T (x - mu)|^2 <= 1.
inline FieldSample field_at(const Scene &scene, const Vec3 &x, const Vec3 &view_dir) {
    return FieldEvaluator(scene, view_dir)(x);
}

struct QuadratureOptions {
    /// Cells whose end points see different field values are bisected this
    /// many times before falling back to the midpoint value. 0 is the plain
    /// midpoint rule.
    int refine_levels = 0;
    double padding = 1e-9;
};

namespace detail {

struct QuadratureAccumulator {
    Rgb color;
    double transmittance = 1.0;

    void add(const FieldSample &f, double h) {
        if (!(f.sigma > 0.0) || !(h > 0.0)) return;
        const double a = -std::expm1(-f.sigma * h);
        color += f.color * (transmittance * a);
        transmittance *= std::exp(-f.sigma * h);
    }
};

template <class Field>
void quadrature_cell(Field &field, double t0, const FieldSample &f0, double t1, const FieldSample &f1, int levels,
                     QuadratureAccumulator &acc) {
    const double tm = 0.5 * (t0 + t1);
    const FieldSample fm = field(tm);
    if (levels <= 0 || (f0 == fm && fm == f1)) {
        acc.add(fm, t1 - t0);
        return;
    }
    quadrature_cell(field, t0, f0, tm, fm, levels - 1, acc);
    quadrature_cell(field, tm, fm, t1, f1, levels - 1, acc);
}

} // namespace detail

/// Dense quadrature of the volume rendering integral: uniform steps over the
/// span of surface crossings (padded), field sampled at cell midpoints, each
/// cell composited as a constant-density slab.
inline Rgb quadrature_render(const Scene &scene, const Ray &ray, int n_steps, const QuadratureOptions &opts = {}) {
    if (n_steps < 1) throw Error("quadrature_render: n_steps must be >= 1");
    const auto hits = intersect_all(scene, ray);
    if (hits.empty()) return scene.background;
    double lo = kInf, hi = -kInf;
    for (const auto &h : hits) {
        lo = std::min(lo, h.t_enter);
        hi = std::max(hi, h.t_exit);
    }
    lo = std::max(ray.t_min, lo - opts.padding);
    hi += opts.padding;
    const FieldEvaluator eval(scene, ray.direction);
    auto field = [&](double t) { return eval(ray.at(t)); };
    detail::QuadratureAccumulator acc;
    const double h = (hi - lo) / n_steps;
    double t0 = lo;
    FieldSample f0 = field(t0);
    for (int i = 0; i < n_steps; ++i) {
        const double t1 = i + 1 == n_steps ? hi : lo + h * (i + 1);
        const FieldSample f1 = opts.refine_levels > 0 ? field(t1) : FieldSample{};
        detail::quadrature_cell(field, t0, f0, t1, f1, opts.refine_levels, acc);
        t0 = t1;
        f0 = f1;
    }
    return acc.color + scene.background * acc.transmittance;
}

/// BVH-free renderer: intersect all primitives, then the usual event pipeline.
inline CompositeResult bruteforce_render(const Scene &scene, const Ray &ray, double t_stop = kDefaultTransmittanceStop) {
    return composite_ray(build_events(intersect_all(scene, ray), scene, ray.direction), scene.background, t_stop);
}

} // namespace ever
