// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/math.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ever {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// A parameter lies outside the domain of a mapping (e.g. alpha >= 1/0.99).
class DomainError : public Error {
  public:
    using Error::Error;
};

/// Upper clamp for the opacity parameter; keeps the density finite.
inline constexpr double kAlphaMax = 0.9999;
/// The density mapping scales alpha by this factor before the log.
inline constexpr double kAlphaScale = 0.99;
inline constexpr double kDefaultMaxPrimitiveSize = 25.0;
inline constexpr int kMaxShDegree = 3;
/// Sharpness of the color activation.
inline constexpr double kSoftplusBeta = 10.0;

constexpr int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Constant-density ellipsoid with spherical-harmonic color.
struct EllipsoidPrimitive {
    Vec3 mean;
    Quat rotation;           // unit (w, x, y, z)
    Vec3 scale{1.0, 1.0, 1.0}; // semi-axis lengths
    double alpha = 0.5;      // opacity parameter in [0, kAlphaMax]
    std::vector<Rgb> sh;     // (L+1)^2 coefficients, one RGB triple each

    Mat3 rotation_matrix() const { return rotation.to_matrix(); }
};

struct Scene {
    std::vector<EllipsoidPrimitive> primitives;
    Rgb background{0.0, 0.0, 0.0};
    int sh_degree = 1;        // degree L of the stored coefficients
    int sh_degree_active = 1; // degree used when evaluating colors

    std::size_t size() const { return primitives.size(); }
};

/// Density of a primitive from its opacity parameter:
/// sigma = -log(1 - 0.99 alpha) / min(scale).
inline double sigma_from_alpha(double alpha, const Vec3 &scale) {
    const double arg = 1.0 - kAlphaScale * alpha;
    if (!(alpha >= 0.0) || !(arg > 0.0) || !(min_component(scale) > 0.0))
        throw DomainError("sigma_from_alpha: alpha=" + std::to_string(alpha) + " outside [0, 1/0.99) or non-positive scale");
    const double sigma = -std::log1p(-kAlphaScale * alpha) / min_component(scale);
    if (!std::isfinite(sigma)) throw DomainError("sigma_from_alpha: non-finite density");
    return sigma;
}

/// Derivatives of sigma_from_alpha with respect to alpha and to min(scale).
struct SigmaPartials {
    double d_alpha;
    double d_min_scale;
};

inline SigmaPartials sigma_partials(double alpha, const Vec3 &scale) {
    const double smin = min_component(scale);
    const double sigma = sigma_from_alpha(alpha, scale);
    return {kAlphaScale / ((1.0 - kAlphaScale * alpha) * smin), -sigma / smin};
}

/// Inverse of sigma_from_alpha for a fixed scale.
inline double alpha_from_sigma(double sigma, const Vec3 &scale) {
    return -std::expm1(-sigma * min_component(scale)) / kAlphaScale;
}

inline double softplus(double x, double beta = kSoftplusBeta) {
    const double bx = beta * x;
    if (bx > 30.0) return x + std::log1p(std::exp(-bx)) / beta;
    return std::log1p(std::exp(bx)) / beta;
}

/// d softplus / dx, i.e. the logistic function of beta x.
inline double softplus_grad(double x, double beta = kSoftplusBeta) {
    const double bx = beta * x;
    if (bx >= 0.0) return 1.0 / (1.0 + std::exp(-bx));
    const double e = std::exp(bx);
    return e / (1.0 + e);
}

namespace sh {
inline constexpr double C0 = 0.28209479177387814;
inline constexpr double C1 = 0.4886025119029199;
inline constexpr std::array<double, 5> C2{1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                                          -1.0925484305920792, 0.5462742152960396};
inline constexpr std::array<double, 7> C3{-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                                          0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                                          -0.5900435899266435};
} // namespace sh

/// Real spherical-harmonic basis (graphics convention) up to `degree`;
/// entries beyond (degree+1)^2 are zero.
inline std::array<double, 16> sh_basis(int degree, const Vec3 &d) {
    std::array<double, 16> b{};
    b[0] = sh::C0;
    if (degree < 1) return b;
    const double x = d.x, y = d.y, z = d.z;
    b[1] = -sh::C1 * y;
    b[2] = sh::C1 * z;
    b[3] = -sh::C1 * x;
    if (degree < 2) return b;
    const double xx = x * x, yy = y * y, zz = z * z;
    const double xy = x * y, yz = y * z, xz = x * z;
    b[4] = sh::C2[0] * xy;
    b[5] = sh::C2[1] * yz;
    b[6] = sh::C2[2] * (2.0 * zz - xx - yy);
    b[7] = sh::C2[3] * xz;
    b[8] = sh::C2[4] * (xx - yy);
    if (degree < 3) return b;
    b[9] = sh::C3[0] * y * (3.0 * xx - yy);
    b[10] = sh::C3[1] * xy * z;
    b[11] = sh::C3[2] * y * (4.0 * zz - xx - yy);
    b[12] = sh::C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = sh::C3[4] * x * (4.0 * zz - xx - yy);
    b[14] = sh::C3[5] * z * (xx - yy);
    b[15] = sh::C3[6] * x * (xx - 3.0 * yy);
    return b;
}

/// Pre-activation color: SH expansion summed per channel.
inline Rgb eval_color_raw(const EllipsoidPrimitive &p, const Vec3 &view_dir, int sh_degree_active) {
    const int degree = std::min(sh_degree_active, kMaxShDegree);
    const auto basis = sh_basis(degree, view_dir);
    const int n = std::min<int>(sh_coeff_count(degree), static_cast<int>(p.sh.size()));
    Rgb c;
    for (int i = 0; i < n; ++i) c += p.sh[static_cast<std::size_t>(i)] * basis[static_cast<std::size_t>(i)];
    return c;
}

/// View-dependent primitive color, softplus-activated so it is strictly positive.
inline Rgb eval_color(const EllipsoidPrimitive &p, const Vec3 &view_dir, int sh_degree_active) {
    const Rgb raw = eval_color_raw(p, view_dir, sh_degree_active);
    return {softplus(raw.x), softplus(raw.y), softplus(raw.z)};
}

/// Renormalizes every rotation. Rotations already within 4 ulp of unit norm
/// are left alone, so a second call changes nothing.
inline void renormalize_rotations(Scene &scene) {
    for (auto &p : scene.primitives)
        if (std::abs(p.rotation.norm() - 1.0) > 4.0 * std::numeric_limits<double>::epsilon()) p.rotation = p.rotation.normalized();
}

struct Violation {
    std::ptrdiff_t index; // -1 for scene-level problems
    std::string message;
};

struct ValidationOptions {
    double max_primitive_size = kDefaultMaxPrimitiveSize;
    double quat_tolerance = 1e-9;
};

/// Reports every invariant violation; an empty result means the scene is valid.
inline std::vector<Violation> validate_scene(const Scene &scene, const ValidationOptions &opts = {}) {
    std::vector<Violation> out;
    auto bad = [&out](std::ptrdiff_t i, const std::string &what) { out.push_back({i, what}); };
    if (scene.sh_degree < 0 || scene.sh_degree > kMaxShDegree)
        bad(-1, "sh_degree must be in 0..3");
    if (scene.sh_degree_active < 0 || scene.sh_degree_active > scene.sh_degree)
        bad(-1, "sh_degree_active must be in 0..sh_degree");
    if (!isfinite(scene.background) || min_component(scene.background) < 0.0 || max_component(scene.background) > 1.0)
        bad(-1, "background must lie in [0,1]");
    const auto ncoeff = static_cast<std::size_t>(sh_coeff_count(std::clamp(scene.sh_degree, 0, kMaxShDegree)));
    for (std::size_t k = 0; k < scene.primitives.size(); ++k) {
        const auto &p = scene.primitives[k];
        const auto i = static_cast<std::ptrdiff_t>(k);
        if (!isfinite(p.mean)) bad(i, "mean is not finite");
        const double qn = p.rotation.norm();
        if (!(std::abs(qn - 1.0) <= opts.quat_tolerance)) {
            std::ostringstream os;
            os << "rotation quaternion norm " << qn << " is not 1";
            bad(i, os.str());
        }
        if (!isfinite(p.scale) || !(min_component(p.scale) > 0.0))
            bad(i, "scale components must be positive");
        else if (max_component(p.scale) > opts.max_primitive_size)
            bad(i, "scale exceeds max_primitive_size");
        if (!(p.alpha >= 0.0 && p.alpha <= kAlphaMax)) bad(i, "alpha outside [0, 0.9999]");
        if (p.sh.size() != ncoeff) bad(i, "expected " + std::to_string(ncoeff) + " SH coefficients");
        for (const auto &c : p.sh)
            if (!isfinite(c)) {
                bad(i, "SH coefficient is not finite");
                break;
            }
    }
    return out;
}

/// Primitive with a constant (view-independent) color target: the DC
/// coefficient is chosen so the activated color equals `rgb`.
inline EllipsoidPrimitive make_primitive(const Vec3 &mean, const Vec3 &scale, double alpha, const Rgb &rgb,
                                         int sh_degree = 1, const Quat &rotation = {}) {
    auto inv_softplus = [](double y) {
        const double by = kSoftplusBeta * y;
        return (by > 30.0 ? by + std::log(-std::expm1(-by)) : std::log(std::expm1(by))) / kSoftplusBeta;
    };
    EllipsoidPrimitive p;
    p.mean = mean;
    p.scale = scale;
    p.alpha = alpha;
    p.rotation = rotation;
    p.sh.assign(static_cast<std::size_t>(sh_coeff_count(sh_degree)), Rgb{});
    p.sh[0] = Rgb{inv_softplus(rgb.x), inv_softplus(rgb.y), inv_softplus(rgb.z)} / sh::C0;
    return p;
}

} // namespace ever
