// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "ever/backward.hpp"
#include "ever/bvh.hpp"
#include "ever/image_io.hpp"
#include "ever/loss.hpp"
#include "ever/render.hpp"
#include "ever/scene.hpp"
#include "ever/scene_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <vector>

namespace ever {

/// Training hyperparameters. Learning rates for scale, rotation and SH
/// follow the 3DGS recipe; scale is optimized in log space and alpha through
/// a logit.
struct TrainConfig {
    int iterations = 30000;
    std::uint64_t seed = 0;

    double lr_alpha = 0.0125;
    double lr_position_init = 4e-5; // multiplied by the scene extent
    double lr_position_final = 4e-7;
    double lr_scale = 0.005;
    double lr_quat = 0.001;
    double lr_sh = 0.0025;          // degree-0 coefficients
    double lr_sh_rest_factor = 1.0 / 20.0;

    bool densify = true;
    double percent_dense = 0.001785;
    int densify_interval = 200;
    int densify_start = 1500;
    int densify_stop = 16000;
    std::size_t max_primitives = 7'000'000;
    double split_grad_threshold = 2.5e-7;
    double clone_grad_threshold = 0.1;
    double prune_alpha = 0.005;
    double split_scale_divisor = 1.6;
    double clone_offset = 0.5; // clone displacement, in units of the parent's largest semi-axis

    int sh_degree_interval = 2000;
    double max_primitive_size = kDefaultMaxPrimitiveSize;
    double lambda_dssim = 0.2;
    double lambda_aniso = 0.01;

    bool jitter = true;
    double t_stop = kDefaultTransmittanceStop;
    int threads = 0;
    int log_interval = 0; // steps between log rows; 0 logs once per epoch
};

inline void validate_config(const TrainConfig &c) {
    auto positive = [](double v, const char *name) {
        if (!(v > 0.0)) throw Error(std::string("config: ") + name + " must be positive");
    };
    positive(c.lr_alpha, "lr_alpha");
    positive(c.lr_position_init, "lr_position_init");
    positive(c.lr_position_final, "lr_position_final");
    positive(c.lr_scale, "lr_scale");
    positive(c.lr_quat, "lr_quat");
    positive(c.lr_sh, "lr_sh");
    positive(c.percent_dense, "percent_dense");
    positive(c.densify_interval, "densify_interval");
    positive(c.split_grad_threshold, "split_grad_threshold");
    positive(c.clone_grad_threshold, "clone_grad_threshold");
    positive(c.sh_degree_interval, "sh_degree_interval");
    positive(c.max_primitive_size, "max_primitive_size");
    if (c.iterations < 0) throw Error("config: iterations must be >= 0");
    if (c.densify_start >= c.densify_stop) throw Error("config: densify_start must be < densify_stop");
}

inline TrainConfig config_from_json(const nlohmann::json &j) {
    TrainConfig c;
#define EVER_CFG(name) c.name = j.value(#name, c.name)
    EVER_CFG(iterations);
    EVER_CFG(seed);
    EVER_CFG(lr_alpha);
    EVER_CFG(lr_position_init);
    EVER_CFG(lr_position_final);
    EVER_CFG(lr_scale);
    EVER_CFG(lr_quat);
    EVER_CFG(lr_sh);
    EVER_CFG(lr_sh_rest_factor);
    EVER_CFG(densify);
    EVER_CFG(percent_dense);
    EVER_CFG(densify_interval);
    EVER_CFG(densify_start);
    EVER_CFG(densify_stop);
    EVER_CFG(max_primitives);
    EVER_CFG(split_grad_threshold);
    EVER_CFG(clone_grad_threshold);
    EVER_CFG(prune_alpha);
    EVER_CFG(split_scale_divisor);
    EVER_CFG(clone_offset);
    EVER_CFG(sh_degree_interval);
    EVER_CFG(max_primitive_size);
    EVER_CFG(lambda_dssim);
    EVER_CFG(lambda_aniso);
    EVER_CFG(jitter);
    EVER_CFG(t_stop);
    EVER_CFG(threads);
    EVER_CFG(log_interval);
#undef EVER_CFG
    for (auto it = j.begin(); it != j.end(); ++it) {
        static const char *known[] = {"iterations", "seed", "lr_alpha", "lr_position_init", "lr_position_final",
                                      "lr_scale", "lr_quat", "lr_sh", "lr_sh_rest_factor", "densify",
                                      "percent_dense", "densify_interval", "densify_start", "densify_stop",
                                      "max_primitives", "split_grad_threshold", "clone_grad_threshold",
                                      "prune_alpha", "split_scale_divisor", "clone_offset", "sh_degree_interval",
                                      "max_primitive_size", "lambda_dssim", "lambda_aniso", "jitter", "t_stop",
                                      "threads", "log_interval"};
        if (std::none_of(std::begin(known), std::end(known), [&](const char *k) { return it.key() == k; }))
            throw ParseError("config: unknown key '" + it.key() + "'");
    }
    validate_config(c);
    return c;
}

inline TrainConfig load_config(const std::string &path) {
    return config_from_json(io::parse_document(io::read_text(path), path));
}

/// Exponential interpolation from the initial to the final position rate.
inline double position_lr(const TrainConfig &c, int step) {
    const double t = c.iterations > 0 ? std::clamp(static_cast<double>(step) / c.iterations, 0.0, 1.0) : 0.0;
    return std::exp((1.0 - t) * std::log(c.lr_position_init) + t * std::log(c.lr_position_final));
}

// ---------------------------------------------------------------------------
// Anisotropy regularizer

/// sum over visible primitives of stopgrad(1 - alpha) (max(s) - min(s)).
/// When `grads` is given, adds `weight` times the gradient to d_scale only.
inline double anisotropy_loss(const Scene &scene, const std::vector<char> &visible, GradientBuffer *grads = nullptr,
                              double weight = 1.0) {
    double total = 0.0;
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        if (i < visible.size() && !visible[i]) continue;
        const auto &p = scene.primitives[i];
        const double w = 1.0 - p.alpha;
        total += w * (max_component(p.scale) - min_component(p.scale));
        if (grads) {
            const int hi = argmax_component(p.scale), lo = argmin_component(p.scale);
            if (hi != lo && max_component(p.scale) > min_component(p.scale)) {
                grads->prims[i].d_scale[hi] += weight * w;
                grads->prims[i].d_scale[lo] -= weight * w;
            }
        }
    }
    return total;
}

// ---------------------------------------------------------------------------
// Adam state

/// Flat per-primitive parameter layout: mean(3) quat(4) log-scale(3)
/// alpha-logit(1) sh(3 per coefficient).
struct ParamLayout {
    static constexpr std::size_t mean = 0, quat = 3, log_scale = 7, alpha_logit = 10, sh = 11;
    std::size_t sh_coeffs = 4;
    std::size_t per_primitive() const { return sh + 3 * sh_coeffs; }
};

struct AdamState {
    ParamLayout layout;
    std::uint64_t step = 0;
    std::vector<double> m, v; // n_primitives * layout.per_primitive()

    void resize(std::size_t n) {
        m.resize(n * layout.per_primitive(), 0.0);
        v.resize(n * layout.per_primitive(), 0.0);
    }
    std::size_t primitives() const { return m.size() / layout.per_primitive(); }

    /// Rebuilds the moments for a new primitive list: entry i comes from old
    /// primitive source[i], or starts at zero when source[i] is negative.
    void remap(const std::vector<std::ptrdiff_t> &source) {
        const std::size_t p = layout.per_primitive();
        std::vector<double> nm(source.size() * p, 0.0), nv(source.size() * p, 0.0);
        for (std::size_t i = 0; i < source.size(); ++i) {
            if (source[i] < 0) continue;
            const auto s = static_cast<std::size_t>(source[i]);
            std::copy_n(m.begin() + static_cast<std::ptrdiff_t>(s * p), p, nm.begin() + static_cast<std::ptrdiff_t>(i * p));
            std::copy_n(v.begin() + static_cast<std::ptrdiff_t>(s * p), p, nv.begin() + static_cast<std::ptrdiff_t>(i * p));
        }
        m = std::move(nm);
        v = std::move(nv);
    }
};

inline double logit(double a) {
    a = std::clamp(a, 1e-9, kAlphaMax);
    return std::log(a / (1.0 - a));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// One Adam step over all primitive parameters using the gradients in `g`.
inline void adam_update(Scene &scene, const GradientBuffer &g, AdamState &st, const TrainConfig &cfg, int step,
                        double scene_extent) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-15;
    ++st.step;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.step));
    const std::size_t per = st.layout.per_primitive();
    const double lr_mean = position_lr(cfg, step) * scene_extent;
    for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
        auto &p = scene.primitives[i];
        const auto &pg = g.prims[i];
        double *m = st.m.data() + i * per;
        double *v = st.v.data() + i * per;
        auto adam = [&](std::size_t k, double grad, double lr) {
            m[k] = b1 * m[k] + (1.0 - b1) * grad;
            v[k] = b2 * v[k] + (1.0 - b2) * grad * grad;
            return -lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
        };
        for (int c = 0; c < 3; ++c) p.mean[c] += adam(ParamLayout::mean + static_cast<std::size_t>(c), pg.d_mean[c], lr_mean);
        Quat q = p.rotation;
        for (int c = 0; c < 4; ++c)
            q[c] += adam(ParamLayout::quat + static_cast<std::size_t>(c), pg.d_quat[static_cast<std::size_t>(c)], cfg.lr_quat);
        p.rotation = q.normalized();
        for (int c = 0; c < 3; ++c) {
            const double step_log = adam(ParamLayout::log_scale + static_cast<std::size_t>(c), pg.d_scale[c] * p.scale[c], cfg.lr_scale);
            p.scale[c] *= std::exp(step_log);
        }
        const double a = std::clamp(p.alpha, 1e-9, kAlphaMax);
        const double step_logit = adam(ParamLayout::alpha_logit, pg.d_alpha * a * (1.0 - a), cfg.lr_alpha);
        p.alpha = std::clamp(sigmoid(logit(a) + step_logit), 0.0, kAlphaMax);
        for (std::size_t k = 0; k < p.sh.size() && k < st.layout.sh_coeffs; ++k) {
            const double lr = k == 0 ? cfg.lr_sh : cfg.lr_sh * cfg.lr_sh_rest_factor;
            for (int c = 0; c < 3; ++c) p.sh[k][c] += adam(ParamLayout::sh + 3 * k + static_cast<std::size_t>(c), pg.d_sh[k][c], lr);
        }
    }
}

// ---------------------------------------------------------------------------
// Adaptive density control

/// The vanished-gradient test: opacity across the longest axis exceeds 0.99.
inline bool vanished_gradient_split(const EllipsoidPrimitive &p) {
    return 0.99 < -std::expm1(-sigma_from_alpha(p.alpha, p.scale) * max_component(p.scale));
}

/// Alpha giving a primitive of scale `child_scale` half the density of `parent`.
inline double halved_density_alpha(const EllipsoidPrimitive &parent, const Vec3 &child_scale) {
    return alpha_from_sigma(0.5 * sigma_from_alpha(parent.alpha, parent.scale), child_scale);
}

struct AdcReport {
    std::size_t cloned = 0;
    std::size_t split = 0;
    std::size_t split_vanished = 0; // splits triggered only by the vanished-gradient test
    std::size_t pruned = 0;
};

/// Clone, split and prune. Statistics in `stats` refer to the current
/// primitive order; `adam` is remapped to the new order.
template <class Rng>
AdcReport adc_step(Scene &scene, const GradientBuffer &stats, AdamState *adam, const TrainConfig &cfg,
                   double scene_extent, Rng &rng, bool allow_densify = true) {
    AdcReport rep;
    const std::size_t n = scene.primitives.size();
    std::vector<EllipsoidPrimitive> next;
    std::vector<std::ptrdiff_t> source;
    std::vector<EllipsoidPrimitive> appended;
    std::vector<std::ptrdiff_t> appended_source;
    next.reserve(n);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double size_limit = cfg.percent_dense * scene_extent;
    const bool densify = allow_densify && n < cfg.max_primitives;
    for (std::size_t i = 0; i < n; ++i) {
        const auto &p = scene.primitives[i];
        const auto &st = stats.prims[i];
        const double g = st.visibility_count > 0 ? st.grad_stat_accum / st.visibility_count : 0.0;
        const bool large = max_component(p.scale) >= size_limit;
        const bool clone = densify && g > cfg.clone_grad_threshold && !large;
        const bool grad_split = densify && g > cfg.split_grad_threshold && large;
        const bool vanished = densify && vanished_gradient_split(p);
        if (grad_split || vanished) {
            ++rep.split;
            if (!grad_split) ++rep.split_vanished;
            const Vec3 child_scale = p.scale / cfg.split_scale_divisor;
            const double child_alpha = halved_density_alpha(p, child_scale);
            const Mat3 rot = p.rotation_matrix();
            for (int c = 0; c < 2; ++c) {
                EllipsoidPrimitive child = p;
                const Vec3 offset{normal(rng) * p.scale.x, normal(rng) * p.scale.y, normal(rng) * p.scale.z};
                child.mean = p.mean + rot * offset;
                child.scale = child_scale;
                child.alpha = child_alpha;
                appended.push_back(child);
                appended_source.push_back(-1);
            }
            continue;
        }
        next.push_back(p);
        source.push_back(static_cast<std::ptrdiff_t>(i));
        if (clone) {
            ++rep.cloned;
            EllipsoidPrimitive copy = p;
            const double gn = norm(st.mean_grad_accum);
            if (gn > 0.0) copy.mean -= st.mean_grad_accum * (cfg.clone_offset * max_component(p.scale) / gn);
            appended.push_back(copy);
            appended_source.push_back(-1);
        }
    }
    next.insert(next.end(), appended.begin(), appended.end());
    source.insert(source.end(), appended_source.begin(), appended_source.end());

    std::vector<EllipsoidPrimitive> kept;
    std::vector<std::ptrdiff_t> kept_source;
    kept.reserve(next.size());
    for (std::size_t i = 0; i < next.size(); ++i) {
        const auto &p = next[i];
        if (p.alpha < cfg.prune_alpha || max_component(p.scale) > cfg.max_primitive_size) {
            ++rep.pruned;
            continue;
        }
        kept.push_back(p);
        kept_source.push_back(source[i]);
    }
    scene.primitives = std::move(kept);
    if (adam) adam->remap(kept_source);
    return rep;
}

// ---------------------------------------------------------------------------
// Datasets

struct View {
    CameraModel camera;
    Image image;
    std::string name;
};

struct Dataset {
    std::vector<View> train;
    std::vector<View> test;
    Rgb background;
};

/// Radius of the bounding sphere of the camera centers, enlarged by 10%.
inline double scene_extent(const std::vector<View> &views) {
    if (views.empty()) return 1.0;
    Vec3 c;
    for (const auto &v : views) c += v.camera.pose.translation;
    c = c / static_cast<double>(views.size());
    double r = 0.0;
    for (const auto &v : views) r = std::max(r, norm(v.camera.pose.translation - c));
    return r > 0.0 ? 1.1 * r : 1.0;
}

/// Dataset layout: `dataset.json` in the scene format whose "cameras" entries
/// carry two extra keys, "image" (float dump, relative path) and "split"
/// ("train" or "test").
inline Dataset load_dataset(const std::string &dir) {
    namespace fs = std::filesystem;
    const fs::path manifest = fs::path(dir) / "dataset.json";
    const SceneDocument doc = load_scene(manifest.string());
    Dataset ds;
    ds.background = doc.scene.background;
    const auto &cams = doc.raw.at("cameras");
    for (std::size_t i = 0; i < cams.size(); ++i) {
        View v;
        v.camera = doc.cameras[i];
        v.name = cams[i].at("image").get<std::string>();
        v.image = read_float_image((fs::path(dir) / v.name).string());
        if (v.image.width != v.camera.width || v.image.height != v.camera.height)
            throw ParseError(manifest.string() + ": image '" + v.name + "' does not match its camera resolution");
        (cams[i].value("split", std::string("train")) == "test" ? ds.test : ds.train).push_back(std::move(v));
    }
    if (ds.train.empty()) throw ParseError(manifest.string() + ": no training views");
    return ds;
}

inline void save_dataset(const std::string &dir, const Dataset &ds, const Scene &reference = {}) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    Scene bg_only = reference;
    bg_only.background = ds.background;
    auto doc = io::to_json(bg_only);
    doc["cameras"] = nlohmann::json::array();
    auto add = [&](const View &v, const char *split) {
        auto c = io::to_json(v.camera);
        c["image"] = v.name;
        c["split"] = split;
        doc["cameras"].push_back(c);
        write_float_image(v.image, (fs::path(dir) / v.name).string());
    };
    for (const auto &v : ds.train) add(v, "train");
    for (const auto &v : ds.test) add(v, "test");
    io::write_text((fs::path(dir) / "dataset.json").string(), doc.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Forward + backward over an image

/// Reusable per-image buffers.
struct ImageWorkspace {
    std::vector<IntersectionTape> tapes;
    std::vector<Ray> rays;
    std::vector<GradientBuffer> partial;
};

/// Row chunks used for deterministic gradient reduction, independent of thread count.
inline constexpr std::size_t kReductionChunks = 16;

/// Renders `cam` with tapes, evaluates the image loss against `target` and
/// backpropagates into `grads` (which must be sized for `scene`).
inline LossResult forward_backward_image(const Scene &scene, const Bvh &bvh, const CameraModel &cam, const Image &target,
                                         const RenderSettings &settings, double lambda_dssim, GradientBuffer &grads,
                                         ImageWorkspace &ws, Image *rendered = nullptr) {
    const auto npix = static_cast<std::size_t>(cam.width) * static_cast<std::size_t>(cam.height);
    ws.tapes.resize(npix);
    ws.rays.resize(npix);
    Image img(cam.width, cam.height);
    parallel_for(static_cast<std::size_t>(cam.height), settings.threads, [&](std::size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < cam.width; ++x) {
            const std::size_t i = row * static_cast<std::size_t>(cam.width) + static_cast<std::size_t>(x);
            SplitMix64 rng = pixel_rng(settings.seed, x, y, cam.width);
            ws.rays[i] = sample_camera_ray(cam, x, y, settings.jitter, rng);
            ws.tapes[i].pairs.clear();
            img.at(x, y) = render_ray(bvh, scene, ws.rays[i], settings.t_stop, &ws.tapes[i]).color;
        }
    });
    LossResult loss = image_loss(img, target, lambda_dssim, true);

    const std::size_t chunks = std::min<std::size_t>(kReductionChunks, static_cast<std::size_t>(cam.height));
    ws.partial.resize(chunks);
    for (auto &b : ws.partial) b.reset(scene);
    const std::size_t rows_per = (static_cast<std::size_t>(cam.height) + chunks - 1) / chunks;
    parallel_for(chunks, settings.threads, [&](std::size_t c) {
        const std::size_t y0 = c * rows_per, y1 = std::min<std::size_t>(static_cast<std::size_t>(cam.height), y0 + rows_per);
        for (std::size_t i = y0 * static_cast<std::size_t>(cam.width); i < y1 * static_cast<std::size_t>(cam.width); ++i)
            backward_ray(ws.tapes[i], scene, ws.rays[i], loss.grad.pixels[i], ws.partial[c]);
    });
    // Pairwise tree reduction in a fixed order.
    for (std::size_t stride = 1; stride < chunks; stride *= 2)
        for (std::size_t c = 0; c + stride < chunks; c += 2 * stride) ws.partial[c].merge(ws.partial[c + stride]);
    grads.merge(ws.partial[0]);
    if (rendered) *rendered = std::move(img);
    return loss;
}

// ---------------------------------------------------------------------------
// Checkpoints

inline constexpr char kOptimizerMagic[8] = {'E', 'V', 'E', 'R', 'A', 'D', 'A', 'M'};
inline constexpr std::uint32_t kOptimizerVersion = 1;

/// Sidecar layout (little-endian): magic[8], u32 version, u32 params per
/// primitive, u64 adam step, u64 training step, u64 primitive count, then the
/// first and second moments as fp32 arrays.
inline void save_optimizer(const std::string &path, const AdamState &st, std::uint64_t train_step) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out.write(kOptimizerMagic, 8);
    detail::put_u32(out, kOptimizerVersion);
    detail::put_u32(out, static_cast<std::uint32_t>(st.layout.per_primitive()));
    auto put_u64 = [&](std::uint64_t v) {
        detail::put_u32(out, static_cast<std::uint32_t>(v));
        detail::put_u32(out, static_cast<std::uint32_t>(v >> 32));
    };
    put_u64(st.step);
    put_u64(train_step);
    put_u64(st.primitives());
    for (double x : st.m) detail::put_f32(out, static_cast<float>(x));
    for (double x : st.v) detail::put_f32(out, static_cast<float>(x));
    if (!out) throw Error("write failed for '" + path + "'");
}

inline AdamState load_optimizer(const std::string &path, std::uint64_t &train_step) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path + "'");
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kOptimizerMagic, 8) != 0) throw ParseError(path + ": bad magic");
    if (detail::get_u32(in) != kOptimizerVersion) throw ParseError(path + ": unsupported version");
    AdamState st;
    const std::uint32_t per = detail::get_u32(in);
    if (per < ParamLayout::sh || (per - ParamLayout::sh) % 3 != 0) throw ParseError(path + ": bad parameter layout");
    st.layout.sh_coeffs = (per - ParamLayout::sh) / 3;
    auto get_u64 = [&] {
        const std::uint64_t lo = detail::get_u32(in);
        return lo | (static_cast<std::uint64_t>(detail::get_u32(in)) << 32);
    };
    st.step = get_u64();
    train_step = get_u64();
    const std::uint64_t n = get_u64();
    st.resize(n);
    for (auto &x : st.m) x = detail::get_f32(in);
    for (auto &x : st.v) x = detail::get_f32(in);
    return st;
}

// ---------------------------------------------------------------------------
// Training loop

struct MetricsRow {
    int step = 0;
    double loss = 0.0;
    double psnr = 0.0;
    std::size_t n_primitives = 0;
    double fps = 0.0;
};

struct TrainResult {
    std::vector<MetricsRow> log;
    std::vector<AdcReport> adc;
    double final_loss = 0.0;
    int steps = 0;
};

/// Everything that must survive a checkpoint.
struct TrainState {
    Scene scene;
    AdamState adam;
    int step = 0; // completed steps
};

inline TrainState make_train_state(Scene scene) {
    TrainState s;
    s.adam.layout.sh_coeffs = static_cast<std::size_t>(sh_coeff_count(scene.sh_degree));
    s.adam.resize(scene.primitives.size());
    s.scene = std::move(scene);
    return s;
}

inline void write_metrics_csv(const std::string &path, const std::vector<MetricsRow> &rows) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << "step,loss,psnr,n_primitives,fps\n";
    out.precision(10);
    for (const auto &r : rows) out << r.step << ',' << r.loss << ',' << r.psnr << ',' << r.n_primitives << ',' << r.fps << '\n';
}

/// Seed for everything random at a given step; a function of (seed, step) only.
inline std::uint64_t step_seed(std::uint64_t seed, int step) {
    return SplitMix64(seed, 0x5eedULL + static_cast<std::uint64_t>(step))();
}

/// Runs `steps` more optimizer steps from `state`. Each step renders one
/// training view (views visited in a per-epoch shuffled order) with jittered
/// rays, applies L1 + DSSIM + anisotropy losses, takes an Adam step, and
/// periodically runs adaptive density control.
inline TrainResult train(TrainState &state, const Dataset &data, const TrainConfig &cfg, int steps,
                         const std::function<void(const MetricsRow &)> &on_log = {}) {
    validate_config(cfg);
    if (data.train.empty()) throw Error("train: dataset has no training views");
    TrainResult res;
    Scene &scene = state.scene;
    const double extent = scene_extent(data.train);
    const int threads = resolve_threads(cfg.threads);
    const int epoch = static_cast<int>(data.train.size());
    const int log_every = cfg.log_interval > 0 ? cfg.log_interval : epoch;
    GradientBuffer stats(scene);
    ImageWorkspace ws;
    double loss_acc = 0.0, psnr_acc = 0.0;
    int acc_n = 0;
    auto wall = std::chrono::steady_clock::now();
    std::uint64_t frames = 0;

    for (int k = 0; k < steps; ++k) {
        const int step = state.step + 1;
        if (step > 1 && (step - 1) % cfg.sh_degree_interval == 0 && scene.sh_degree_active < scene.sh_degree)
            ++scene.sh_degree_active;

        // View order: shuffled per epoch from the epoch index alone, so resumed runs match.
        const int ep = (step - 1) / epoch, pos = (step - 1) % epoch;
        std::vector<int> order(static_cast<std::size_t>(epoch));
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 shuffle_rng(step_seed(cfg.seed ^ 0xe90cULL, ep));
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        const View &view = data.train[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])];

        Scene render_scene = scene;
        render_scene.background = data.background;
        const Bvh bvh = Bvh::build(render_scene);
        GradientBuffer grads(render_scene);
        RenderSettings rs;
        rs.jitter = cfg.jitter;
        rs.seed = step_seed(cfg.seed, step);
        rs.t_stop = cfg.t_stop;
        rs.threads = threads;
        Image rendered;
        const LossResult lr =
            forward_backward_image(render_scene, bvh, view.camera, view.image, rs, cfg.lambda_dssim, grads, ws, &rendered);
        ++frames;

        std::vector<char> visible(scene.primitives.size(), 0);
        for (std::size_t i = 0; i < visible.size(); ++i) visible[i] = grads.prims[i].visibility_count > 0;
        const double aniso = cfg.lambda_aniso > 0.0 ? anisotropy_loss(scene, visible, &grads, cfg.lambda_aniso) : 0.0;
        const double total = lr.value + cfg.lambda_aniso * aniso;
        if (!std::isfinite(total) || !grads.finite())
            throw Error("train: non-finite loss or gradient at step " + std::to_string(step));

        for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
            stats.prims[i].grad_stat_accum += grads.prims[i].grad_stat_accum;
            stats.prims[i].visibility_count += grads.prims[i].visibility_count;
            stats.prims[i].mean_grad_accum += grads.prims[i].mean_grad_accum;
        }
        adam_update(scene, grads, state.adam, cfg, step, extent);
        state.step = step;
        res.final_loss = total;
        loss_acc += total;
        psnr_acc += psnr(rendered, view.image);
        ++acc_n;

        if (cfg.densify && step >= cfg.densify_start && step <= cfg.densify_stop && step % cfg.densify_interval == 0) {
            std::mt19937_64 adc_rng(step_seed(cfg.seed ^ 0xadcULL, step));
            res.adc.push_back(adc_step(scene, stats, &state.adam, cfg, extent, adc_rng));
            stats.reset(scene);
        }

        if (step % log_every == 0 || k + 1 == steps) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - wall).count();
            MetricsRow row{step, loss_acc / acc_n, psnr_acc / acc_n, scene.primitives.size(),
                           secs > 0.0 ? static_cast<double>(frames) / secs : 0.0};
            res.log.push_back(row);
            if (on_log) on_log(row);
            loss_acc = psnr_acc = 0.0;
            acc_n = 0;
            frames = 0;
            wall = std::chrono::steady_clock::now();
        }
        ++res.steps;
    }
    return res;
}

/// Mean PSNR of `scene` over views (pixel centers, no jitter).
inline double evaluate_psnr(const Scene &scene, const std::vector<View> &views, const Rgb &background, int threads = 1,
                            std::function<Image(const Scene &, const Bvh &, const CameraModel &, const RenderSettings &)> renderer = {}) {
    if (views.empty()) return 0.0;
    Scene s = scene;
    s.background = background;
    const Bvh bvh = Bvh::build(s);
    RenderSettings rs;
    rs.threads = threads;
    double sum = 0.0;
    for (const auto &v : views) {
        const Image img = renderer ? renderer(s, bvh, v.camera, rs) : render_image(s, bvh, v.camera, rs);
        sum += psnr(img, v.image);
    }
    return sum / static_cast<double>(views.size());
}

inline void save_checkpoint(const std::string &dir, const TrainState &state) {
    std::filesystem::create_directories(dir);
    save_scene((std::filesystem::path(dir) / "scene.json").string(), state.scene);
    save_optimizer((std::filesystem::path(dir) / "optimizer.bin").string(), state.adam, static_cast<std::uint64_t>(state.step));
}

inline TrainState load_checkpoint(const std::string &dir) {
    TrainState s;
    s.scene = load_scene((std::filesystem::path(dir) / "scene.json").string()).scene;
    std::uint64_t step = 0;
    s.adam = load_optimizer((std::filesystem::path(dir) / "optimizer.bin").string(), step);
    s.step = static_cast<int>(step);
    if (s.adam.primitives() != s.scene.primitives.size()) throw ParseError(dir + ": optimizer state does not match scene");
    return s;
}

} // namespace ever
