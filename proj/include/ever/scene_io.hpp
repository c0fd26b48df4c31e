// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/camera.hpp"
#include "ever/scene.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace ever {

/// Malformed or unreadable input document.
class ParseError : public Error {
  public:
    using Error::Error;
};

namespace io {

using json = nlohmann::json;

inline json vec(const Vec3 &v) { return json::array({v.x, v.y, v.z}); }

inline Vec3 vec3_from(const json &j, const char *what) {
    if (!j.is_array() || j.size() != 3) throw ParseError(std::string(what) + ": expected an array of 3 numbers");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

inline json to_json(const EllipsoidPrimitive &p) {
    json sh = json::array();
    for (const auto &c : p.sh) sh.push_back(vec(c));
    return {{"mean", vec(p.mean)},
            {"quat", json::array({p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z})},
            {"scale", vec(p.scale)},
            {"alpha", p.alpha},
            {"sh", sh}};
}

inline EllipsoidPrimitive primitive_from_json(const json &j) {
    EllipsoidPrimitive p;
    p.mean = vec3_from(j.at("mean"), "mean");
    const auto &q = j.at("quat");
    if (!q.is_array() || q.size() != 4) throw ParseError("quat: expected [w, x, y, z]");
    p.rotation = {q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>()};
    p.scale = vec3_from(j.at("scale"), "scale");
    p.alpha = j.at("alpha").get<double>();
    for (const auto &c : j.at("sh")) p.sh.push_back(vec3_from(c, "sh"));
    return p;
}

inline json to_json(const CameraModel &c) {
    json pose = json::array();
    for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) pose.push_back(c.pose.rotation(r, k));
        pose.push_back(c.pose.translation[r]);
    }
    return {{"kind", to_string(c.kind)},
            {"pose", pose},
            {"fx", c.fx},
            {"fy", c.fy},
            {"cx", c.cx},
            {"cy", c.cy},
            {"fisheye_f", c.fisheye_f},
            {"aperture_radius", c.aperture_radius},
            {"focus_distance", c.focus_distance},
            {"width", c.width},
            {"height", c.height}};
}

inline CameraModel camera_from_json(const json &j) {
    CameraModel c;
    c.kind = camera_kind_from_string(j.value("kind", std::string("pinhole")));
    const auto &pose = j.at("pose");
    if (!pose.is_array() || pose.size() != 12) throw ParseError("pose: expected 12 numbers (3x4 row-major)");
    for (int r = 0; r < 3; ++r) {
        for (int k = 0; k < 3; ++k) c.pose.rotation(r, k) = pose[static_cast<std::size_t>(4 * r + k)].get<double>();
        c.pose.translation[r] = pose[static_cast<std::size_t>(4 * r + 3)].get<double>();
    }
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    c.fx = j.value("fx", 0.5 * c.width);
    c.fy = j.value("fy", c.fx);
    c.cx = j.value("cx", 0.5 * c.width);
    c.cy = j.value("cy", 0.5 * c.height);
    c.fisheye_f = j.value("fisheye_f", c.fx);
    c.aperture_radius = j.value("aperture_radius", 0.0);
    c.focus_distance = j.value("focus_distance", 1.0);
    if (c.width < 1 || c.height < 1) throw ParseError("camera width and height must be >= 1");
    if (!(c.focus_distance > 0.0)) throw ParseError("focus_distance must be > 0");
    if (!(c.aperture_radius >= 0.0)) throw ParseError("aperture_radius must be >= 0");
    return c;
}

inline json to_json(const Scene &s, const std::vector<CameraModel> &cameras = {}) {
    json prims = json::array();
    for (const auto &p : s.primitives) prims.push_back(to_json(p));
    json doc = {{"format", "ever-scene"},
                {"version", 1},
                {"sh_degree", s.sh_degree},
                {"sh_degree_active", s.sh_degree_active},
                {"background", vec(s.background)},
                {"primitives", prims}};
    if (!cameras.empty()) {
        json cams = json::array();
        for (const auto &c : cameras) cams.push_back(to_json(c));
        doc["cameras"] = cams;
    }
    return doc;
}

inline Scene scene_from_json(const json &j) {
    Scene s;
    s.sh_degree = j.value("sh_degree", 1);
    s.sh_degree_active = j.value("sh_degree_active", s.sh_degree);
    if (j.contains("background")) s.background = vec3_from(j.at("background"), "background");
    if (j.contains("primitives"))
        for (std::size_t i = 0; i < j.at("primitives").size(); ++i) {
            try {
                s.primitives.push_back(primitive_from_json(j.at("primitives")[i]));
            } catch (const json::exception &e) {
                throw ParseError("primitives[" + std::to_string(i) + "]: " + e.what());
            } catch (const ParseError &e) {
                throw ParseError("primitives[" + std::to_string(i) + "]: " + e.what());
            }
        }
    return s;
}

/// Parses text, mapping syntax errors to "line L, column C".
inline json parse_document(const std::string &text, const std::string &name) {
    try {
        return json::parse(text);
    } catch (const json::parse_error &e) {
        std::size_t line = 1, col = 1;
        for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ParseError(name + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + e.what());
    }
}

inline std::string read_text(const std::string &path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_text(const std::string &path, const std::string &text) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << text;
    if (!out) throw Error("write failed for '" + path + "'");
}

} // namespace io

/// Scene plus any cameras stored alongside it.
struct SceneDocument {
    Scene scene;
    std::vector<CameraModel> cameras;
    nlohmann::json raw; // the parsed document, for extra fields
};

inline SceneDocument parse_scene_document(const std::string &text, const std::string &name = "<scene>") {
    const auto j = io::parse_document(text, name);
    SceneDocument doc;
    try {
        doc.scene = io::scene_from_json(j);
        if (j.contains("cameras"))
            for (const auto &c : j.at("cameras")) doc.cameras.push_back(io::camera_from_json(c));
    } catch (const nlohmann::json::exception &e) {
        throw ParseError(name + ": " + e.what());
    } catch (const ParseError &e) {
        throw ParseError(name + ": " + e.what());
    }
    doc.raw = j;
    return doc;
}

inline SceneDocument load_scene(const std::string &path) { return parse_scene_document(io::read_text(path), path); }

inline std::string serialize_scene(const Scene &scene, const std::vector<CameraModel> &cameras = {}) {
    return io::to_json(scene, cameras).dump(2);
}

inline void save_scene(const std::string &path, const Scene &scene, const std::vector<CameraModel> &cameras = {}) {
    io::write_text(path, serialize_scene(scene, cameras) + "\n");
}

} // namespace ever
