// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/geometry.hpp"
#include "ever/math.hpp"
#include "ever/scene.hpp"

#include <cstdint>
#include <string>
#include <utility>

namespace ever {

enum class CameraKind { pinhole, fisheye_equidistant, thin_lens };

inline std::string to_string(CameraKind k) {
    switch (k) {
    case CameraKind::pinhole: return "pinhole";
    case CameraKind::fisheye_equidistant: return "fisheye_equidistant";
    case CameraKind::thin_lens: return "thin_lens";
    }
    return "?";
}

inline CameraKind camera_kind_from_string(const std::string &s) {
    if (s == "pinhole") return CameraKind::pinhole;
    if (s == "fisheye_equidistant" || s == "fisheye") return CameraKind::fisheye_equidistant;
    if (s == "thin_lens") return CameraKind::thin_lens;
    throw Error("unknown camera kind '" + s + "'");
}

/// World-from-camera rigid transform. Camera frame: +x right, +y down, +z forward.
struct Pose {
    Mat3 rotation;
    Vec3 translation;

    Vec3 forward() const { return rotation.col(2); }
};

/// Camera at `eye` looking at `target`; `up` is the world up direction.
inline Pose look_at(const Vec3 &eye, const Vec3 &target, const Vec3 &up = {0.0, 1.0, 0.0}) {
    const Vec3 f = normalize(target - eye);
    const Vec3 r = normalize(cross(f, up));
    const Vec3 d = cross(f, r); // image down
    return {Mat3::from_cols(r, d, f), eye};
}

struct CameraModel {
    CameraKind kind = CameraKind::pinhole;
    Pose pose;
    double fx = 100.0, fy = 100.0, cx = 50.0, cy = 50.0;
    double fisheye_f = 100.0;       // pixels per radian
    double aperture_radius = 0.0;   // world units
    double focus_distance = 1.0;    // world units
    int width = 100, height = 100;
};

/// Unit-disk sample from a unit-square sample (concentric mapping).
inline std::pair<double, double> concentric_disk(double u, double v) {
    const double a = 2.0 * u - 1.0, b = 2.0 * v - 1.0;
    if (a == 0.0 && b == 0.0) return {0.0, 0.0};
    double r, phi;
    if (std::abs(a) > std::abs(b)) {
        r = a;
        phi = (kPi / 4.0) * (b / a);
    } else {
        r = b;
        phi = (kPi / 2.0) - (kPi / 4.0) * (a / b);
    }
    return {r * std::cos(phi), r * std::sin(phi)};
}

/// Primary ray through continuous pixel coordinates (px, py).
inline Ray generate_ray(const CameraModel &cam, double px, double py, std::pair<double, double> lens_sample = {0.0, 0.0}) {
    if (!(px >= 0.0 && px < cam.width && py >= 0.0 && py < cam.height))
        throw DomainError("generate_ray: pixel (" + std::to_string(px) + ", " + std::to_string(py) + ") outside image");
    Ray ray;
    ray.origin = cam.pose.translation;
    switch (cam.kind) {
    case CameraKind::pinhole:
        ray.direction = normalize(cam.pose.rotation * Vec3{(px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0});
        break;
    case CameraKind::fisheye_equidistant: {
        const double dx = px - cam.cx, dy = py - cam.cy;
        const double r = std::hypot(dx, dy);
        const double theta = r / cam.fisheye_f;
        if (theta >= kPi) throw DomainError("generate_ray: fisheye angle >= pi");
        Vec3 local{0.0, 0.0, 1.0};
        if (r > 0.0) {
            const double s = std::sin(theta);
            local = {s * dx / r, s * dy / r, std::cos(theta)};
        }
        ray.direction = normalize(cam.pose.rotation * local);
        break;
    }
    case CameraKind::thin_lens: {
        const Vec3 on_plane{(px - cam.cx) / cam.fx, (py - cam.cy) / cam.fy, 1.0};
        if (cam.aperture_radius == 0.0) {
            ray.direction = normalize(cam.pose.rotation * on_plane);
            break;
        }
        const Vec3 focus = on_plane * cam.focus_distance;
        const Vec3 lens{cam.aperture_radius * lens_sample.first, cam.aperture_radius * lens_sample.second, 0.0};
        ray.origin = cam.pose.translation + cam.pose.rotation * lens;
        ray.direction = normalize(cam.pose.rotation * (focus - lens));
        break;
    }
    }
    return ray;
}

/// Small counter-seeded generator (SplitMix64). Satisfies UniformRandomBitGenerator.
class SplitMix64 {
  public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}
    SplitMix64(std::uint64_t seed, std::uint64_t stream) : state_(seed ^ mix(stream + 0x632be59bd9b4e019ULL)) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }

    result_type operator()() { return mix(state_ += 0x9e3779b97f4a7c15ULL); }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  private:
    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
};

/// Sample position within pixel (px, py): uniform when jittering, the center otherwise.
template <class Rng>
std::pair<double, double> jitter_pixel(int px, int py, Rng &rng, bool enabled = true) {
    if (!enabled) return {px + 0.5, py + 0.5};
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    const double v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return {px + u, py + v};
}

} // namespace ever
