// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/bvh.hpp"
#include "ever/camera.hpp"
#include "ever/geometry.hpp"
#include "ever/parallel.hpp"
#include "ever/scene.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <queue>
#include <vector>

namespace ever {

enum class EventKind : std::uint8_t { enter = 0, exit = 1 };

/// A ray crossing one primitive surface. Enter events carry +sigma and
/// +sigma * color, exit events the negatives.
struct RayEvent {
    double t = 0.0;
    double delta_sigma = 0.0;
    Rgb delta_premul;
    std::uint32_t primitive_index = 0;
    EventKind kind = EventKind::enter;
};

/// Total order on events: t, then enter before exit, then primitive index.
constexpr bool event_before(const RayEvent &a, const RayEvent &b) {
    if (a.t != b.t) return a.t < b.t;
    if (a.kind != b.kind) return a.kind == EventKind::enter;
    return a.primitive_index < b.primitive_index;
}

inline RayEvent enter_event(const HitPair &h, double sigma, const Rgb &color) {
    return {h.t_enter, sigma, color * sigma, h.primitive_index, EventKind::enter};
}

inline RayEvent exit_event(const HitPair &h, double sigma, const Rgb &color) {
    return {h.t_exit, -sigma, color * (-sigma), h.primitive_index, EventKind::exit};
}

/// Two events per hit pair, sorted with event_before.
inline std::vector<RayEvent> build_events(const std::vector<HitPair> &pairs, const Scene &scene, const Vec3 &view_dir) {
    std::vector<RayEvent> events;
    events.reserve(2 * pairs.size());
    for (const auto &h : pairs) {
        const auto &p = scene.primitives[h.primitive_index];
        const double sigma = sigma_from_alpha(p.alpha, p.scale);
        const Rgb color = eval_color(p, view_dir, scene.sh_degree_active);
        events.push_back(enter_event(h, sigma, color));
        events.push_back(exit_event(h, sigma, color));
    }
    std::sort(events.begin(), events.end(), event_before);
    return events;
}

/// Running sums and compositing accumulators for one ray.
struct RayState {
    double sigma_running = 0.0;
    Rgb premul_running;
    double transmittance = 1.0;
    Rgb accum_color;
    double t_prev = 0.0;
    bool has_prev = false;
    int active = 0; // primitives the ray is currently inside
};

inline constexpr double kDefaultTransmittanceStop = 1e-4;

/// Folds sorted events into a color. Each inter-event segment has constant
/// density sigma_i and color premul_i / sigma_i and is composited in closed
/// form: C += T c_i (1 - exp(-sigma_i dt)), T *= exp(-sigma_i dt).
class Compositor {
  public:
    explicit Compositor(double t_stop = kDefaultTransmittanceStop) : t_stop_(t_stop) {}

    /// Consumes one event; returns false once transmittance fell below the
    /// stop threshold (that event is then not applied).
    bool push(const RayEvent &e) {
        if (state_.has_prev) {
            const double dt = e.t - state_.t_prev;
            if (dt > 0.0 && state_.sigma_running > 0.0) {
                const double optical = state_.sigma_running * dt;
                const double a = -std::expm1(-optical);
                state_.accum_color += (state_.premul_running / state_.sigma_running) * (state_.transmittance * a);
                state_.transmittance *= std::exp(-optical);
            }
        }
        if (state_.transmittance < t_stop_) {
            stopped_ = true;
            return false;
        }
        state_.sigma_running += e.delta_sigma;
        state_.premul_running += e.delta_premul;
        state_.active += e.kind == EventKind::enter ? 1 : -1;
        if (state_.active == 0) {
            state_.sigma_running = 0.0;
            state_.premul_running = Rgb{};
        } else if (state_.sigma_running < 0.0) {
            state_.sigma_running = 0.0; // cancellation from +-sigma sums
        }
        state_.t_prev = e.t;
        state_.has_prev = true;
        ++applied_;
        return true;
    }

    bool stopped() const { return stopped_; }
    std::size_t applied() const { return applied_; }
    const RayState &state() const { return state_; }

    /// Final color with the background composited behind everything.
    Rgb finish(const Rgb &background) const { return state_.accum_color + background * state_.transmittance; }

  private:
    double t_stop_;
    RayState state_;
    std::size_t applied_ = 0;
    bool stopped_ = false;
};

struct CompositeResult {
    Rgb color;
    double transmittance = 1.0;
};

inline CompositeResult composite_ray(const std::vector<RayEvent> &events, const Rgb &background,
                                     double t_stop = kDefaultTransmittanceStop) {
    Compositor comp(t_stop);
    for (const auto &e : events)
        if (!comp.push(e)) break;
    return {comp.finish(background), comp.state().transmittance};
}

/// Hit pairs consumed by a forward pass, enough to replay it exactly.
struct IntersectionTape {
    std::vector<HitPair> pairs; // in t_enter order
    std::size_t events_consumed = 0; // applied events plus the stopping event, if any
    bool stopped = false;
    RayState final_state;
};

/// Hard cap on tape entries per ray.
inline constexpr std::size_t kMaxTapeEntries = 4096;

/// Renders one ray by merging the ordered pair stream with a heap of pending
/// exits, so only the pairs needed before early termination are traced.
template <class PairSource>
CompositeResult render_ray(const Scene &scene, const Ray &ray, PairSource &&next_pair, double t_stop,
                           IntersectionTape *tape = nullptr) {
    struct Pending {
        RayEvent ev;
        bool operator<(const Pending &o) const { return event_before(o.ev, ev); } // min-heap
    };
    std::priority_queue<Pending> exits;
    Compositor comp(t_stop);
    std::optional<HitPair> peek = next_pair();
    std::size_t consumed = 0;
    std::optional<RayEvent> entering;
    auto load_enter = [&]() {
        if (!peek) {
            entering.reset();
            return;
        }
        const auto &p = scene.primitives[peek->primitive_index];
        const double sigma = sigma_from_alpha(p.alpha, p.scale);
        const Rgb color = eval_color(p, ray.direction, scene.sh_degree_active);
        entering = enter_event(*peek, sigma, color);
        exits.push({exit_event(*peek, sigma, color)});
        if (tape) {
            if (tape->pairs.size() >= kMaxTapeEntries)
                throw Error("intersection tape exceeded " + std::to_string(kMaxTapeEntries) + " entries");
            tape->pairs.push_back(*peek);
        }
        peek = next_pair();
    };
    load_enter();
    for (;;) {
        RayEvent ev;
        if (entering && (exits.empty() || !event_before(exits.top().ev, *entering))) {
            ev = *entering;
            load_enter();
        } else if (!exits.empty()) {
            ev = exits.top().ev;
            exits.pop();
        } else {
            break;
        }
        ++consumed;
        if (!comp.push(ev)) break;
    }
    if (tape) {
        tape->events_consumed = consumed;
        tape->stopped = comp.stopped();
        tape->final_state = comp.state();
    }
    return {comp.finish(scene.background), comp.state().transmittance};
}

/// Renders one ray through the BVH.
inline CompositeResult render_ray(const Bvh &bvh, const Scene &scene, const Ray &ray,
                                  double t_stop = kDefaultTransmittanceStop, IntersectionTape *tape = nullptr,
                                  TraversalStats *stats = nullptr) {
    PairStream stream(bvh, scene, ray, kDefaultHitQueueCapacity, stats);
    return render_ray(scene, ray, [&stream] { return stream.next(); }, t_stop, tape);
}

/// Linear RGB image, row-major.
struct Image {
    int width = 0, height = 0;
    std::vector<Rgb> pixels;

    Image() = default;
    Image(int w, int h, const Rgb &fill = {}) : width(w), height(h) {
        if (w < 0 || h < 0) throw Error("negative image size");
        pixels.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
    }
    Rgb &at(int x, int y) { return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
    const Rgb &at(int x, int y) const {
        return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)];
    }
};

struct RenderSettings {
    bool jitter = false;
    int spp = 1;
    double t_stop = kDefaultTransmittanceStop;
    std::uint64_t seed = 0;
    int threads = 1;
};

/// Per-pixel sample generator; depends only on (seed, pixel), never on thread layout.
inline SplitMix64 pixel_rng(std::uint64_t seed, int x, int y, int width) {
    return SplitMix64(seed, static_cast<std::uint64_t>(y) * static_cast<std::uint64_t>(width) + static_cast<std::uint64_t>(x));
}

/// Camera ray for sample `s` of pixel (x, y); consumes from `rng`.
inline Ray sample_camera_ray(const CameraModel &cam, int x, int y, bool jitter, SplitMix64 &rng) {
    const auto [px, py] = jitter_pixel(x, y, rng, jitter);
    std::pair<double, double> lens{0.0, 0.0};
    if (cam.kind == CameraKind::thin_lens && cam.aperture_radius > 0.0) {
        const double u = rng.uniform(), v = rng.uniform();
        lens = concentric_disk(u, v);
    }
    return generate_ray(cam, px, py, lens);
}

/// Generic image loop: `shade(ray)` returns the color for one camera ray.
template <class Shade>
Image render_with(const CameraModel &cam, const RenderSettings &settings, Shade &&shade) {
    Image img(cam.width, cam.height);
    const int spp = std::max(1, settings.spp);
    parallel_for(static_cast<std::size_t>(cam.height), settings.threads, [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < cam.width; ++x) {
            SplitMix64 rng = pixel_rng(settings.seed, x, y, cam.width);
            Rgb sum;
            for (int s = 0; s < spp; ++s) sum += shade(sample_camera_ray(cam, x, y, settings.jitter, rng));
            img.at(x, y) = sum / static_cast<double>(spp);
        }
    });
    return img;
}

inline Image render_image(const Scene &scene, const Bvh &bvh, const CameraModel &cam, const RenderSettings &settings = {}) {
    return render_with(cam, settings, [&](const Ray &ray) { return render_ray(bvh, scene, ray, settings.t_stop).color; });
}

inline Image render_image(const Scene &scene, const CameraModel &cam, const RenderSettings &settings = {}) {
    const Bvh bvh = Bvh::build(scene);
    return render_image(scene, bvh, cam, settings);
}

/// Opacity 1 - exp(-sigma chord) of a single primitive for rays parallel to
/// `view_dir` offset by each impact parameter (world units) along a fixed
/// perpendicular axis through the mean. `sigma` overrides the density derived
/// from alpha (densities above the alpha mapping's range need it).
inline std::vector<double> opacity_profile(const EllipsoidPrimitive &p, const Vec3 &view_dir,
                                           const std::vector<double> &offsets,
                                           std::optional<double> sigma_override = std::nullopt) {
    const Vec3 d = normalize(view_dir);
    const Vec3 helper = std::abs(d.x) < 0.9 ? Vec3{1.0, 0.0, 0.0} : Vec3{0.0, 1.0, 0.0};
    const Vec3 side = normalize(cross(d, helper));
    const double sigma = sigma_override ? *sigma_override : sigma_from_alpha(p.alpha, p.scale);
    const double back_off = 4.0 * max_component(p.scale) + 1.0;
    std::vector<double> out;
    out.reserve(offsets.size());
    for (const double b : offsets) {
        Ray ray;
        ray.origin = p.mean + side * b - d * back_off;
        ray.direction = d;
        const auto hit = intersect_ellipsoid(ray, p);
        const double chord = hit ? hit->t_exit - hit->t_enter : 0.0;
        out.push_back(-std::expm1(-sigma * chord));
    }
    return out;
}

} // namespace ever
