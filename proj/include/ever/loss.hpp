// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/render.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace ever {

inline void require_same_shape(const Image &a, const Image &b) {
    if (a.width != b.width || a.height != b.height)
        throw Error("image shape mismatch: " + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                    std::to_string(b.width) + "x" + std::to_string(b.height));
}

inline double mse(const Image &a, const Image &b) {
    require_same_shape(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        const Rgb d = a.pixels[i] - b.pixels[i];
        s += dot(d, d);
    }
    return s / (3.0 * static_cast<double>(a.pixels.size()));
}

/// PSNR for a peak value of 1.
inline double psnr(const Image &a, const Image &b) {
    const double m = mse(a, b);
    return m > 0.0 ? -10.0 * std::log10(m) : kInf;
}

/// Single-channel plane used by the SSIM filters.
struct Plane {
    int w = 0, h = 0;
    std::vector<double> v;

    Plane(int w_, int h_) : w(w_), h(h_), v(static_cast<std::size_t>(w_) * static_cast<std::size_t>(h_), 0.0) {}
    double &operator()(int x, int y) { return v[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)]; }
    double operator()(int x, int y) const { return v[static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x)]; }
};

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Normalized 1D Gaussian taps of the SSIM window.
inline std::array<double, kSsimWindow> ssim_taps() {
    std::array<double, kSsimWindow> g{};
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - kSsimWindow / 2;
        g[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        sum += g[static_cast<std::size_t>(i)];
    }
    for (auto &x : g) x /= sum;
    return g;
}

/// Separable Gaussian blur with zero padding. The kernel is symmetric, so this
/// operator is its own adjoint.
inline Plane gaussian_blur(const Plane &in) {
    static const auto g = ssim_taps();
    constexpr int r = kSsimWindow / 2;
    Plane tmp(in.w, in.h), out(in.w, in.h);
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int xx = x + k;
                if (xx >= 0 && xx < in.w) s += g[static_cast<std::size_t>(k + r)] * in(xx, y);
            }
            tmp(x, y) = s;
        }
    for (int y = 0; y < in.h; ++y)
        for (int x = 0; x < in.w; ++x) {
            double s = 0.0;
            for (int k = -r; k <= r; ++k) {
                const int yy = y + k;
                if (yy >= 0 && yy < in.h) s += g[static_cast<std::size_t>(k + r)] * tmp(x, yy);
            }
            out(x, y) = s;
        }
    return out;
}

inline Plane channel(const Image &img, int c) {
    Plane p(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) p.v[i] = img.pixels[i][c];
    return p;
}

struct SsimResult {
    double value = 1.0;
    Image grad; // d mean-SSIM / d image (first argument); empty unless requested
};

/// Mean SSIM over pixels and channels (11x11 Gaussian window, sigma 1.5,
/// zero-padded), optionally with its gradient with respect to `x`.
inline SsimResult ssim(const Image &x, const Image &y, bool with_grad = false) {
    require_same_shape(x, y);
    SsimResult res;
    const double n = 3.0 * static_cast<double>(x.pixels.size());
    if (with_grad) res.grad = Image(x.width, x.height);
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        const Plane px = channel(x, c), py = channel(y, c);
        Plane pxx(x.width, x.height), pyy(x.width, x.height), pxy(x.width, x.height);
        for (std::size_t i = 0; i < px.v.size(); ++i) {
            pxx.v[i] = px.v[i] * px.v[i];
            pyy.v[i] = py.v[i] * py.v[i];
            pxy.v[i] = px.v[i] * py.v[i];
        }
        const Plane mx = gaussian_blur(px), my = gaussian_blur(py);
        const Plane exx = gaussian_blur(pxx), eyy = gaussian_blur(pyy), exy = gaussian_blur(pxy);
        Plane a_mu(x.width, x.height), a_xx(x.width, x.height), a_xy(x.width, x.height);
        for (std::size_t i = 0; i < px.v.size(); ++i) {
            const double m1 = mx.v[i], m2 = my.v[i];
            const double vx = exx.v[i] - m1 * m1, vy = eyy.v[i] - m2 * m2, cxy = exy.v[i] - m1 * m2;
            const double n1 = 2.0 * m1 * m2 + kSsimC1, n2 = 2.0 * cxy + kSsimC2;
            const double d1 = m1 * m1 + m2 * m2 + kSsimC1, d2 = vx + vy + kSsimC2;
            const double s = n1 * n2 / (d1 * d2);
            total += s;
            if (with_grad) {
                // Partials with exx, exy, mu_x as the independent quantities.
                a_mu.v[i] = (2.0 * m2 * n2 - 2.0 * m2 * n1) / (d1 * d2) - s * (2.0 * m1 / d1 - 2.0 * m1 / d2);
                a_xx.v[i] = -s / d2;
                a_xy.v[i] = 2.0 * n1 / (d1 * d2);
            }
        }
        if (with_grad) {
            const Plane g_mu = gaussian_blur(a_mu), g_xx = gaussian_blur(a_xx), g_xy = gaussian_blur(a_xy);
            for (std::size_t i = 0; i < px.v.size(); ++i)
                res.grad.pixels[i][c] = (g_mu.v[i] + 2.0 * px.v[i] * g_xx.v[i] + py.v[i] * g_xy.v[i]) / n;
        }
    }
    res.value = total / n;
    return res;
}

struct LossResult {
    double value = 0.0;
    double l1 = 0.0;
    double ssim = 1.0;
    Image grad; // dL / d image
};

/// L1 mean + lambda (1 - SSIM) / 2, with gradient.
inline LossResult image_loss(const Image &image, const Image &target, double lambda_dssim = 0.2, bool with_grad = true) {
    require_same_shape(image, target);
    LossResult r;
    const double n = 3.0 * static_cast<double>(image.pixels.size());
    if (with_grad) r.grad = Image(image.width, image.height);
    double l1 = 0.0;
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        const Rgb d = image.pixels[i] - target.pixels[i];
        l1 += std::abs(d.x) + std::abs(d.y) + std::abs(d.z);
        if (with_grad) {
            auto sgn = [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); };
            r.grad.pixels[i] = Rgb{sgn(d.x), sgn(d.y), sgn(d.z)} / n;
        }
    }
    r.l1 = l1 / n;
    r.value = r.l1;
    if (lambda_dssim != 0.0) {
        const SsimResult s = ssim(image, target, with_grad);
        r.ssim = s.value;
        r.value += lambda_dssim * (1.0 - s.value) / 2.0;
        if (with_grad)
            for (std::size_t i = 0; i < image.pixels.size(); ++i) r.grad.pixels[i] -= s.grad.pixels[i] * (lambda_dssim / 2.0);
    }
    return r;
}

} // namespace ever
