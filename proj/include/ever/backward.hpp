// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/geometry.hpp"
#include "ever/oracle.hpp"
#include "ever/render.hpp"
#include "ever/scene.hpp"

#include <array>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace ever {

/// Accumulated loss gradients of one primitive.
struct PrimitiveGrad {
    Vec3 d_mean;
    std::array<double, 4> d_quat{}; // tangent to the unit sphere at the current rotation
    Vec3 d_scale;
    double d_alpha = 0.0;
    std::vector<Rgb> d_sh;
    double grad_stat_accum = 0.0; // sum over rays of |dL/dmean|
    std::uint32_t visibility_count = 0;
    Vec3 mean_grad_accum; // sum over rays of dL/dmean, used for clone offsets
};

struct GradientBuffer {
    std::vector<PrimitiveGrad> prims;
    Rgb d_background;

    GradientBuffer() = default;
    explicit GradientBuffer(const Scene &scene) { reset(scene); }

    void reset(const Scene &scene) {
        prims.assign(scene.primitives.size(), PrimitiveGrad{});
        const auto n = static_cast<std::size_t>(sh_coeff_count(scene.sh_degree));
        for (auto &g : prims) g.d_sh.assign(n, Rgb{});
        d_background = Rgb{};
    }

    /// Zeroes parameter gradients, keeping the densification statistics.
    void zero_parameter_grads() {
        for (auto &g : prims) {
            g.d_mean = Vec3{};
            g.d_quat = {};
            g.d_scale = Vec3{};
            g.d_alpha = 0.0;
            std::fill(g.d_sh.begin(), g.d_sh.end(), Rgb{});
        }
        d_background = Rgb{};
    }

    void merge(const GradientBuffer &o) {
        for (std::size_t i = 0; i < prims.size(); ++i) {
            auto &a = prims[i];
            const auto &b = o.prims[i];
            a.d_mean += b.d_mean;
            for (int j = 0; j < 4; ++j) a.d_quat[static_cast<std::size_t>(j)] += b.d_quat[static_cast<std::size_t>(j)];
            a.d_scale += b.d_scale;
            a.d_alpha += b.d_alpha;
            for (std::size_t k = 0; k < a.d_sh.size(); ++k) a.d_sh[k] += b.d_sh[k];
            a.grad_stat_accum += b.grad_stat_accum;
            a.visibility_count += b.visibility_count;
            a.mean_grad_accum += b.mean_grad_accum;
        }
        d_background += o.d_background;
    }

    bool finite() const {
        for (const auto &g : prims) {
            if (!isfinite(g.d_mean) || !isfinite(g.d_scale) || !std::isfinite(g.d_alpha)) return false;
            for (double q : g.d_quat)
                if (!std::isfinite(q)) return false;
            for (const auto &c : g.d_sh)
                if (!isfinite(c)) return false;
        }
        return isfinite(d_background);
    }
};

/// Rebuilds the sorted event list of a taped forward pass.
inline std::vector<RayEvent> tape_events(const IntersectionTape &tape, const Scene &scene, const Ray &ray) {
    return build_events(tape.pairs, scene, ray.direction);
}

/// Recomputes the forward color from the tape alone.
inline CompositeResult replay_tape(const IntersectionTape &tape, const Scene &scene, const Ray &ray, double t_stop) {
    const auto events = tape_events(tape, scene, ray);
    Compositor comp(t_stop);
    for (std::size_t j = 0; j < std::min(tape.events_consumed, events.size()); ++j)
        if (!comp.push(events[j])) break;
    return {comp.finish(scene.background), comp.state().transmittance};
}

namespace detail {

/// (1 - exp(-x)) / x and its derivative, stable near 0.
inline std::array<double, 2> phi_and_slope(double x) {
    if (std::abs(x) < 1e-4) return {1.0 - x / 2.0 + x * x / 6.0, -0.5 + x / 3.0 - x * x / 8.0};
    const double one_minus_e = -std::expm1(-x);
    const double phi = one_minus_e / x;
    return {phi, (std::exp(-x) * x - one_minus_e) / (x * x)};
}

inline std::string describe_ray(const Ray &ray) {
    std::ostringstream os;
    os.precision(17);
    os << "ray(origin=(" << ray.origin.x << ", " << ray.origin.y << ", " << ray.origin.z << "), dir=(" << ray.direction.x
       << ", " << ray.direction.y << ", " << ray.direction.z << "))";
    return os.str();
}

} // namespace detail

/// Adjoint pass for one ray. Walks the taped events backwards from the final
/// ray state, undoing each transmittance factor and running-sum update, and
/// accumulates dL/d(parameters) into `grads` given dL/dC = `d_color`.
inline void backward_ray(const IntersectionTape &tape, const Scene &scene, const Ray &ray, const Rgb &d_color,
                         GradientBuffer &grads) {
    const auto events = tape_events(tape, scene, ray);
    const std::size_t n = std::min(tape.events_consumed, events.size());
    const std::size_t applied = tape.stopped && n > 0 ? n - 1 : n;
    const std::size_t n_pairs = tape.pairs.size();

    // Slot of each taped pair and the event indices of its enter/exit.
    std::vector<std::size_t> enter_at(n_pairs, SIZE_MAX), exit_at(n_pairs, SIZE_MAX);
    std::vector<std::size_t> slot_of_event(events.size());
    {
        // Pair slots are looked up by primitive index; a primitive occurs at most once per ray.
        std::vector<std::pair<std::uint32_t, std::size_t>> by_index(n_pairs);
        for (std::size_t s = 0; s < n_pairs; ++s) by_index[s] = {tape.pairs[s].primitive_index, s};
        std::sort(by_index.begin(), by_index.end());
        for (std::size_t j = 0; j < events.size(); ++j) {
            const auto it = std::lower_bound(by_index.begin(), by_index.end(),
                                             std::pair<std::uint32_t, std::size_t>{events[j].primitive_index, 0});
            const std::size_t s = it->second;
            slot_of_event[j] = s;
            (events[j].kind == EventKind::enter ? enter_at : exit_at)[s] = j;
        }
    }

    std::vector<double> d_sigma(n_pairs, 0.0), d_t(events.size(), 0.0);
    std::vector<Rgb> d_col(n_pairs);
    std::vector<std::uint32_t> lit(events.size() + 1, 0); // prefix count of segments that composited anything

    double sigma = tape.final_state.sigma_running;
    Rgb premul = tape.final_state.premul_running;
    int active = tape.final_state.active;
    double transmittance = tape.final_state.transmittance;
    Rgb suffix = scene.background; // color of everything behind the current segment, seen from its start
    double adj_sigma = 0.0;
    Rgb adj_premul;

    for (std::size_t jj = applied; jj-- > 0;) {
        if (jj + 1 < n) {
            const double dt = events[jj + 1].t - events[jj].t;
            if (dt > 0.0) {
                const double x = sigma * dt;
                const double e = std::exp(-x);
                const double t_start = transmittance / e;
                if (!std::isfinite(t_start) || !std::isfinite(sigma) || !isfinite(premul))
                    throw Error("backward_ray: non-finite reconstructed state on " + detail::describe_ray(ray));
                const auto [phi, dphi] = detail::phi_and_slope(x);
                const double g_sigma =
                    t_start * dt * dt * dphi * dot(d_color, premul) - dt * e * t_start * dot(d_color, suffix);
                const Rgb g_premul = d_color * (t_start * dt * phi);
                const double g_dt = t_start * e * dot(d_color, premul - suffix * sigma);
                d_t[jj + 1] += g_dt;
                d_t[jj] -= g_dt;
                adj_sigma += g_sigma;
                adj_premul += g_premul;
                suffix = premul * (dt * phi) + suffix * e;
                transmittance = t_start;
                if (sigma > 0.0 && t_start > 0.0) lit[jj + 1] = 1;
            }
        }
        // Undo event jj.
        const RayEvent &ev = events[jj];
        const std::size_t s = slot_of_event[jj];
        const double sign = ev.kind == EventKind::enter ? 1.0 : -1.0;
        const auto &prim = scene.primitives[ev.primitive_index];
        const double sig_p = sign * ev.delta_sigma; // the primitive's density, positive
        const Rgb col_p = sig_p > 0.0 ? ev.delta_premul * (sign / sig_p) : eval_color(prim, ray.direction, scene.sh_degree_active);
        d_sigma[s] += sign * (adj_sigma + dot(adj_premul, col_p));
        d_col[s] += adj_premul * (sign * sig_p);
        sigma -= ev.delta_sigma;
        premul -= ev.delta_premul;
        active -= ev.kind == EventKind::enter ? 1 : -1;
        if (active == 0) {
            sigma = 0.0;
            premul = Rgb{};
        } else if (sigma < 0.0) {
            sigma = 0.0;
        }
    }
    grads.d_background += d_color * tape.final_state.transmittance;
    for (std::size_t j = 0; j < events.size(); ++j) lit[j + 1] += lit[j];

    // Chain per-primitive adjoints to parameters.
    for (std::size_t s = 0; s < n_pairs; ++s) {
        const HitPair &hp = tape.pairs[s];
        const auto &prim = scene.primitives[hp.primitive_index];
        PrimitiveGrad &g = grads.prims[hp.primitive_index];

        const auto sp = sigma_partials(prim.alpha, prim.scale);
        g.d_alpha += d_sigma[s] * sp.d_alpha;
        Vec3 d_scale;
        d_scale[argmin_component(prim.scale)] += d_sigma[s] * sp.d_min_scale;

        const Rgb raw = eval_color_raw(prim, ray.direction, scene.sh_degree_active);
        const Rgb d_raw{d_col[s].x * softplus_grad(raw.x), d_col[s].y * softplus_grad(raw.y),
                        d_col[s].z * softplus_grad(raw.z)};
        const int degree = std::min(scene.sh_degree_active, kMaxShDegree);
        const auto basis = sh_basis(degree, ray.direction);
        const auto nb = std::min<std::size_t>(static_cast<std::size_t>(sh_coeff_count(degree)), g.d_sh.size());
        for (std::size_t k = 0; k < nb; ++k) g.d_sh[k] += d_raw * basis[k];

        Vec3 d_mean;
        std::array<double, 4> d_quat{};
        const double dt_enter = enter_at[s] < n ? d_t[enter_at[s]] : 0.0;
        const double dt_exit = exit_at[s] < n ? d_t[exit_at[s]] : 0.0;
        if (dt_enter != 0.0 || dt_exit != 0.0) {
            const auto roots = detail::unit_sphere_roots(detail::to_local(ray, prim, prim.rotation_matrix()));
            if (roots) {
                auto chain = [&](double root, double adj) {
                    if (adj == 0.0) return;
                    const RootPartials rp = intersection_partials(ray, prim, root);
                    d_mean += rp.d_mean * adj;
                    d_scale += rp.d_scale * adj;
                    for (std::size_t j = 0; j < 4; ++j) d_quat[j] += rp.d_quat[j] * adj;
                };
                // Clamped ends do not move with the primitive.
                if ((*roots)[0] > ray.t_min) chain((*roots)[0], dt_enter);
                if ((*roots)[1] < ray.t_max) chain((*roots)[1], dt_exit);
            }
        }
        // Project out the radial component: rotations only see the unit quaternion.
        const Quat &q = prim.rotation;
        const double radial = d_quat[0] * q.w + d_quat[1] * q.x + d_quat[2] * q.y + d_quat[3] * q.z;
        for (int j = 0; j < 4; ++j) g.d_quat[static_cast<std::size_t>(j)] += d_quat[static_cast<std::size_t>(j)] - radial * q[j];
        g.d_scale += d_scale;
        g.d_mean += d_mean;
        const std::size_t first_seg = std::min(enter_at[s], events.size());
        const std::size_t last_seg = std::min(exit_at[s], events.size());
        if (lit[last_seg] > lit[first_seg]) {
            g.grad_stat_accum += norm(d_mean);
            g.mean_grad_accum += d_mean;
            ++g.visibility_count;
        }
    }
}

/// Forward pass over all primitives (no BVH) that records a tape.
inline CompositeResult taped_bruteforce_render(const Scene &scene, const Ray &ray, double t_stop, IntersectionTape &tape) {
    const auto pairs = intersect_all(scene, ray);
    std::size_t i = 0;
    return render_ray(scene, ray, [&]() -> std::optional<HitPair> {
        if (i == pairs.size()) return std::nullopt;
        return pairs[i++];
    }, t_stop, &tape);
}

enum class ParamClass { mean, quat, scale, alpha, sh };

inline const char *to_string(ParamClass c) {
    switch (c) {
    case ParamClass::mean: return "mean";
    case ParamClass::quat: return "quat";
    case ParamClass::scale: return "scale";
    case ParamClass::alpha: return "alpha";
    case ParamClass::sh: return "sh";
    }
    return "?";
}

/// One scalar parameter; for sh, component = coefficient * 3 + channel.
struct ParamRef {
    std::uint32_t primitive = 0;
    ParamClass cls = ParamClass::mean;
    int component = 0;
};

/// Every scalar parameter of every primitive.
inline std::vector<ParamRef> all_params(const Scene &scene) {
    std::vector<ParamRef> out;
    const int nsh = 3 * sh_coeff_count(scene.sh_degree);
    for (std::uint32_t k = 0; k < scene.primitives.size(); ++k) {
        for (int c = 0; c < 3; ++c) out.push_back({k, ParamClass::mean, c});
        for (int c = 0; c < 4; ++c) out.push_back({k, ParamClass::quat, c});
        for (int c = 0; c < 3; ++c) out.push_back({k, ParamClass::scale, c});
        out.push_back({k, ParamClass::alpha, 0});
        for (int c = 0; c < nsh; ++c) out.push_back({k, ParamClass::sh, c});
    }
    return out;
}

inline double gradient_of(const GradientBuffer &g, const ParamRef &p) {
    const auto &pg = g.prims[p.primitive];
    switch (p.cls) {
    case ParamClass::mean: return pg.d_mean[p.component];
    case ParamClass::quat: return pg.d_quat[static_cast<std::size_t>(p.component)];
    case ParamClass::scale: return pg.d_scale[p.component];
    case ParamClass::alpha: return pg.d_alpha;
    case ParamClass::sh: return pg.d_sh[static_cast<std::size_t>(p.component / 3)][p.component % 3];
    }
    return 0.0;
}

/// Moves one parameter by `delta`. Quaternion components move along the
/// basis vector projected onto the tangent space, then renormalize.
inline void perturb(Scene &scene, const ParamRef &p, double delta) {
    auto &prim = scene.primitives[p.primitive];
    switch (p.cls) {
    case ParamClass::mean: prim.mean[p.component] += delta; break;
    case ParamClass::scale: prim.scale[p.component] += delta; break;
    case ParamClass::alpha: prim.alpha += delta; break;
    case ParamClass::sh: prim.sh[static_cast<std::size_t>(p.component / 3)][p.component % 3] += delta; break;
    case ParamClass::quat: {
        Quat q = prim.rotation;
        const double qj = q[p.component];
        Quat dir{-qj * q.w, -qj * q.x, -qj * q.y, -qj * q.z};
        dir[p.component] += 1.0;
        for (int j = 0; j < 4; ++j) q[j] += delta * dir[j];
        prim.rotation = q.normalized();
        break;
    }
    }
}

inline double parameter_value(const Scene &scene, const ParamRef &p) {
    const auto &prim = scene.primitives[p.primitive];
    switch (p.cls) {
    case ParamClass::mean: return prim.mean[p.component];
    case ParamClass::quat: return prim.rotation[p.component];
    case ParamClass::scale: return prim.scale[p.component];
    case ParamClass::alpha: return prim.alpha;
    case ParamClass::sh: return prim.sh[static_cast<std::size_t>(p.component / 3)][p.component % 3];
    }
    return 0.0;
}

/// Linear probe loss sum_r <weights_r, C(ray_r)>.
struct ProbeLoss {
    std::vector<Ray> rays;
    std::vector<Rgb> weights;
};

inline double evaluate_probe(const Scene &scene, const ProbeLoss &loss) {
    double total = 0.0;
    for (std::size_t r = 0; r < loss.rays.size(); ++r)
        total += dot(loss.weights[r], bruteforce_render(scene, loss.rays[r], 0.0).color);
    return total;
}

/// Analytic gradient of a probe loss (no early termination).
inline GradientBuffer probe_gradient(const Scene &scene, const ProbeLoss &loss) {
    GradientBuffer grads(scene);
    for (std::size_t r = 0; r < loss.rays.size(); ++r) {
        IntersectionTape tape;
        taped_bruteforce_render(scene, loss.rays[r], 0.0, tape);
        backward_ray(tape, scene, loss.rays[r], loss.weights[r], grads);
    }
    return grads;
}

struct FdReport {
    double max_rel_error = 0.0;
    ParamRef worst;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t checked = 0;
};

/// Compares adjoint gradients against a fourth-order central difference
/// (steps +-h and +-2h). The step for a parameter is h * max(1, |value|).
/// Errors are |a - n| / max(|a|, |n|, floor) with floor = 1e-6 * max_k |n_k|,
/// so components that are numerically zero relative to the largest gradient
/// do not dominate.
inline FdReport finite_difference_check(const Scene &scene, const ProbeLoss &loss, std::vector<ParamRef> params = {},
                                        double h = 3e-5) {
    if (params.empty()) params = all_params(scene);
    const GradientBuffer grads = probe_gradient(scene, loss);
    std::vector<double> numeric(params.size()), analytic(params.size());
    double scale = 0.0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double step = h * std::max(1.0, std::abs(parameter_value(scene, params[i])));
        auto at = [&](double d) {
            Scene moved = scene;
            perturb(moved, params[i], d);
            return evaluate_probe(moved, loss);
        };
        numeric[i] = (8.0 * (at(step) - at(-step)) - (at(2.0 * step) - at(-2.0 * step))) / (12.0 * step);
        analytic[i] = gradient_of(grads, params[i]);
        scale = std::max(scale, std::abs(numeric[i]));
    }
    FdReport rep;
    rep.checked = params.size();
    const double floor = std::max(1e-6 * scale, 1e-300);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double err =
            std::abs(analytic[i] - numeric[i]) / std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
        if (i == 0 || err > rep.max_rel_error) {
            rep.max_rel_error = err;
            rep.worst = params[i];
            rep.worst_analytic = analytic[i];
            rep.worst_numeric = numeric[i];
        }
    }
    return rep;
}

/// Probe loss over the pixel centers of a camera with seeded random weights.
inline ProbeLoss camera_probe(const CameraModel &cam, std::uint64_t seed) {
    ProbeLoss loss;
    SplitMix64 rng(seed);
    for (int y = 0; y < cam.height; ++y)
        for (int x = 0; x < cam.width; ++x) {
            loss.rays.push_back(generate_ray(cam, x + 0.5, y + 0.5));
            loss.weights.push_back({rng.uniform() * 2.0 - 1.0, rng.uniform() * 2.0 - 1.0, rng.uniform() * 2.0 - 1.0});
        }
    return loss;
}

inline FdReport finite_difference_check(const Scene &scene, const CameraModel &cam, std::uint64_t seed,
                                        std::vector<ParamRef> params = {}, double h = 3e-5) {
    return finite_difference_check(scene, camera_probe(cam, seed), std::move(params), h);
}

} // namespace ever
