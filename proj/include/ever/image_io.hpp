// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/render.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

namespace ever {

/// Clamp to [0,1], encode with gamma 1/2.2, quantize to 8 bits.
inline std::uint8_t encode_8bit(double linear) {
    const double v = std::pow(std::clamp(linear, 0.0, 1.0), 1.0 / 2.2);
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

/// Binary PPM (P6), 8 bits per channel, gamma 2.2.
inline void write_ppm(const Image &img, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
    for (const auto &p : img.pixels) {
        const char rgb[3] = {static_cast<char>(encode_8bit(p.x)), static_cast<char>(encode_8bit(p.y)),
                             static_cast<char>(encode_8bit(p.z))};
        out.write(rgb, 3);
    }
    if (!out) throw Error("write failed for '" + path + "'");
}

namespace detail {

inline void put_u32(std::ostream &out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char *>(b), 4);
}

inline std::uint32_t get_u32(std::istream &in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char *>(b), 4)) throw Error("unexpected end of file");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream &out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }
inline float get_f32(std::istream &in) { return std::bit_cast<float>(get_u32(in)); }

} // namespace detail

/// Float dump: u32 width, u32 height, then width*height fp32 RGB triples,
/// row-major, everything little-endian.
inline void write_float_image(const Image &img, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    detail::put_u32(out, static_cast<std::uint32_t>(img.width));
    detail::put_u32(out, static_cast<std::uint32_t>(img.height));
    for (const auto &p : img.pixels) {
        detail::put_f32(out, static_cast<float>(p.x));
        detail::put_f32(out, static_cast<float>(p.y));
        detail::put_f32(out, static_cast<float>(p.z));
    }
    if (!out) throw Error("write failed for '" + path + "'");
}

inline Image read_float_image(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "'");
    const auto w = detail::get_u32(in), h = detail::get_u32(in);
    if (w > (1u << 16) || h > (1u << 16)) throw Error("'" + path + "': implausible image size");
    Image img(static_cast<int>(w), static_cast<int>(h));
    for (auto &p : img.pixels) {
        p.x = detail::get_f32(in);
        p.y = detail::get_f32(in);
        p.z = detail::get_f32(in);
    }
    return img;
}

/// Values as they survive a float dump round trip.
inline Image quantize_to_float(Image img) {
    // The volatile store keeps the rounding: GCC 11 at -O3 drops it from the
    // scalar tail of the vectorized loop.
    auto round_to_float = [](double v) {
        volatile float f = static_cast<float>(v);
        return static_cast<double>(f);
    };
    for (auto &p : img.pixels) p = {round_to_float(p.x), round_to_float(p.y), round_to_float(p.z)};
    return img;
}

} // namespace ever
