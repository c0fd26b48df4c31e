// SPDX-License-Identifier: Apache-2.0

#include "ever/ever.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using namespace ever;

namespace {

constexpr int kExitInvalid = 1;
constexpr int kExitVerify = 2;

/// Thrown to leave main with a specific exit code.
struct ExitCode {
    int code;
};

Vec3 to_vec(const std::vector<double> &v) { return {v.at(0), v.at(1), v.at(2)}; }

void require_valid(const Scene &scene, const std::string &name) {
    const auto problems = validate_scene(scene);
    if (problems.empty()) return;
    for (const auto &p : problems) {
        std::cerr << name << ": ";
        if (p.index >= 0) std::cerr << "primitive " << p.index << ": ";
        std::cerr << p.message << '\n';
    }
    throw ExitCode{kExitInvalid};
}

void write_outputs(const Image &img, const std::string &prefix) {
    if (fs::path(prefix).has_parent_path()) fs::create_directories(fs::path(prefix).parent_path());
    write_ppm(img, prefix + ".ppm");
    write_float_image(img, prefix + ".bin");
}

struct CameraArgs {
    int index = -1;
    std::vector<double> eye{0.0, 0.0, 4.0};
    std::vector<double> target{0.0, 0.0, 0.0};
    double fov = 0.7;
    int width = 256, height = 256;
    std::string kind = "pinhole";
    double aperture = 0.0, focus = 4.0;
};

void add_camera_flags(CLI::App *cmd, CameraArgs &c) {
    cmd->add_option("--camera", c.index, "Index of a camera stored in the scene file");
    cmd->add_option("--eye", c.eye, "Camera position")->expected(3);
    cmd->add_option("--target", c.target, "Look-at point")->expected(3);
    cmd->add_option("--fov", c.fov, "Field of view in radians");
    cmd->add_option("--width", c.width);
    cmd->add_option("--height", c.height);
    cmd->add_option("--kind", c.kind, "pinhole, fisheye or thin_lens");
    cmd->add_option("--aperture", c.aperture, "Thin-lens aperture radius");
    cmd->add_option("--focus", c.focus, "Thin-lens focus distance");
}

CameraModel resolve_camera(const CameraArgs &c, const SceneDocument &doc) {
    if (c.index >= 0) {
        if (static_cast<std::size_t>(c.index) >= doc.cameras.size())
            throw Error("scene has " + std::to_string(doc.cameras.size()) + " cameras; --camera " +
                        std::to_string(c.index) + " is out of range");
        return doc.cameras[static_cast<std::size_t>(c.index)];
    }
    CameraModel cam;
    cam.kind = camera_kind_from_string(c.kind);
    cam.width = c.width;
    cam.height = c.height;
    cam.fx = cam.fy = 0.5 * c.width / std::tan(0.5 * c.fov);
    cam.fisheye_f = 0.5 * c.width / (0.5 * c.fov);
    cam.cx = 0.5 * c.width;
    cam.cy = 0.5 * c.height;
    cam.aperture_radius = c.aperture;
    cam.focus_distance = c.focus;
    cam.pose = look_at(to_vec(c.eye), to_vec(c.target));
    return cam;
}

struct RenderArgs {
    std::string mode = "exact";
    int spp = 1;
    std::uint64_t seed = 0;
    double t_stop = kDefaultTransmittanceStop;
    int threads = 0;
    bool jitter = false;
};

void add_render_flags(CLI::App *cmd, RenderArgs &r) {
    cmd->add_option("--mode", r.mode, "exact, splatted or nomix");
    cmd->add_option("--spp", r.spp, "Samples per pixel");
    cmd->add_option("--seed", r.seed);
    cmd->add_option("--t-stop", r.t_stop, "Transmittance below which a ray stops");
    cmd->add_option("--threads", r.threads, "Worker threads (default: EVER_THREADS or all cores)");
    cmd->add_flag("--jitter", r.jitter, "Jitter samples inside each pixel");
}

RenderSettings settings_of(const RenderArgs &r) {
    RenderSettings s;
    s.spp = r.spp;
    s.seed = r.seed;
    s.t_stop = r.t_stop;
    s.threads = resolve_threads(r.threads);
    s.jitter = r.jitter || r.spp > 1;
    return s;
}

int cmd_render(const std::string &scene_path, const std::string &out, const CameraArgs &ca, const RenderArgs &ra) {
    const SceneDocument doc = load_scene(scene_path);
    require_valid(doc.scene, scene_path);
    const CameraModel cam = resolve_camera(ca, doc);
    const RenderSettings rs = settings_of(ra);
    const auto mode = render_mode_from_string(ra.mode);
    const auto t0 = std::chrono::steady_clock::now();
    const Bvh bvh = Bvh::build(doc.scene);
    const Image img = render_mode(mode, doc.scene, bvh, cam, rs);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_outputs(img, out);
    const double rays = static_cast<double>(cam.width) * cam.height * std::max(1, rs.spp);
    std::printf("wrote %s.ppm and %s.bin (%dx%d, mode %s)\n", out.c_str(), out.c_str(), cam.width, cam.height,
                ra.mode.c_str());
    std::printf("time %.3f s, %.0f rays/sec, %d threads\n", secs, secs > 0.0 ? rays / secs : 0.0, rs.threads);
    return 0;
}

int cmd_epi(const std::string &scene_path, const std::string &out, OrbitSpec orbit, const RenderArgs &ra) {
    const SceneDocument doc = load_scene(scene_path);
    require_valid(doc.scene, scene_path);
    const auto mode = render_mode_from_string(ra.mode);
    RenderSettings rs = settings_of(ra);
    const Image epi = render_epi(doc.scene, orbit, mode, rs);
    write_outputs(epi, out);
    const auto r = continuity(epi);
    std::printf("mode %s frames %d width %d\n", ra.mode.c_str(), orbit.n_frames, orbit.width);
    std::printf("max_jump %.6e between frames %d and %d at column %d\n", r.max_jump, r.jump_row, r.jump_row + 1,
                r.jump_column);
    std::printf("total_variation %.6e\n", r.total_variation);
    std::printf("blend_band_run %d\n", blend_band_run(doc.scene, orbit));
    return 0;
}

int cmd_profile(const std::vector<double> &sigmas, const std::string &out, int samples) {
    if (samples < 2) throw Error("--samples must be >= 2");
    std::vector<double> b(static_cast<std::size_t>(samples));
    for (int i = 0; i < samples; ++i) b[static_cast<std::size_t>(i)] = -1.2 + 2.4 * i / (samples - 1);
    const auto unit = make_primitive({}, {1.0, 1.0, 1.0}, 0.5, {0.5, 0.5, 0.5}, 0);
    std::vector<std::vector<double>> curves;
    for (double s : sigmas) {
        if (!(s >= 0.0)) throw Error("densities must be non-negative");
        curves.push_back(opacity_profile(unit, {0.0, 0.0, 1.0}, b, s));
    }
    std::ostringstream csv;
    csv.precision(12);
    csv << "b";
    for (double s : sigmas) csv << ",sigma_" << s;
    csv << '\n';
    for (std::size_t i = 0; i < b.size(); ++i) {
        csv << b[i];
        for (const auto &c : curves) csv << ',' << c[i];
        csv << '\n';
    }
    if (out == "-")
        std::cout << csv.str();
    else {
        io::write_text(out, csv.str());
        std::printf("wrote %s (%zu curves, %d samples)\n", out.c_str(), curves.size(), samples);
    }
    return 0;
}

int cmd_verify(const std::string &scene_path, int random_n, const VerifyOptions &opt) {
    VerifyReport report;
    if (!scene_path.empty()) {
        const SceneDocument doc = load_scene(scene_path);
        require_valid(doc.scene, scene_path);
        verify_scene(doc.scene, opt, 0, report);
    }
    if (random_n > 0) {
        SplitMix64 rng(opt.seed);
        for (int i = 0; i < random_n; ++i) {
            const int n = 1 + static_cast<int>(rng.uniform() * 64);
            verify_scene(random_scene(rng, n), opt, static_cast<std::uint64_t>(i) + 1, report);
        }
    }
    if (report.scenes == 0) throw Error("verify: give a scene file or --random N");
    print_report(std::cout, report, opt);
    if (!report.ok(opt)) throw ExitCode{kExitVerify};
    return 0;
}

int cmd_train(const std::string &dataset_dir, const std::string &config_path, const std::string &out_dir,
              const std::string &init_path, const std::string &resume_dir, int steps, int seed_count) {
    TrainConfig cfg = load_config(config_path);
    const Dataset ds = load_dataset(dataset_dir);
    TrainState state;
    if (!resume_dir.empty()) {
        state = load_checkpoint(resume_dir);
    } else {
        std::string init = init_path;
        if (init.empty() && fs::exists(fs::path(dataset_dir) / "init.json")) init = (fs::path(dataset_dir) / "init.json").string();
        Scene scene;
        if (!init.empty()) {
            scene = load_scene(init).scene;
        } else {
            std::mt19937_64 rng(cfg.seed);
            SeedBounds bounds;
            bounds.radius = scene_extent(ds.train) / 1.1;
            scene.sh_degree = 3;
            scene.sh_degree_active = 0;
            scene.primitives = seed_inverse_contraction(static_cast<std::size_t>(seed_count), bounds, rng, {0.1, 0.5, 3});
        }
        scene.background = ds.background;
        require_valid(scene, init.empty() ? "seeded scene" : init);
        state = make_train_state(std::move(scene));
    }
    const int remaining = steps >= 0 ? steps : std::max(0, cfg.iterations - state.step);
    fs::create_directories(out_dir);
    std::printf("training %d steps from step %d, %zu primitives, %zu train / %zu test views\n", remaining, state.step,
                state.scene.primitives.size(), ds.train.size(), ds.test.size());
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = train(state, ds, cfg, remaining, [](const MetricsRow &m) {
        std::printf("step %6d  loss %.6f  psnr %6.2f  primitives %zu  %.1f steps/s\n", m.step, m.loss, m.psnr,
                    m.n_primitives, m.fps);
        std::fflush(stdout);
    });
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_checkpoint(out_dir, state);
    write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), result.log);
    std::printf("trained in %.1f s; checkpoint in %s\n", secs, out_dir.c_str());
    if (!ds.test.empty()) {
        std::printf("held-out psnr exact %.3f\n", evaluate_psnr(state.scene, ds.test, ds.background, cfg.threads));
    }
    return 0;
}

int cmd_make_dataset(const std::string &out_dir, const SyntheticOptions &opt, int extra, int threads) {
    const Scene truth = synthetic_scene(opt);
    const Dataset ds = synthetic_dataset(truth, opt, resolve_threads(threads));
    save_dataset(out_dir, ds, Scene{{}, truth.background, truth.sh_degree, truth.sh_degree_active});
    save_scene((fs::path(out_dir) / "truth.json").string(), truth);
    save_scene((fs::path(out_dir) / "init.json").string(), perturbed_copy(truth, opt.seed + 1, 0.05, extra));
    std::printf("wrote %s: %zu train and %zu test views at %dx%d\n", out_dir.c_str(), ds.train.size(), ds.test.size(),
                opt.resolution, opt.resolution);
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Exact volumetric ellipsoid rendering: render, analyze, verify and train"};
    app.require_subcommand(1);

    std::string scene_path, out;
    CameraArgs cam_args;
    RenderArgs render_args;

    auto *render = app.add_subcommand("render", "Render a scene to PPM and float dump");
    render->add_option("scene", scene_path, "Scene file")->required();
    render->add_option("out", out, "Output prefix")->required();
    add_camera_flags(render, cam_args);
    add_render_flags(render, render_args);

    OrbitSpec orbit;
    std::vector<double> center{0.0, 0.0, 0.0};
    auto *epi = app.add_subcommand("epi", "Render an orbit EPI and report continuity");
    epi->add_option("scene", scene_path, "Scene file")->required();
    epi->add_option("out", out, "Output prefix")->required();
    epi->add_option("--center", center, "Orbit center")->expected(3);
    epi->add_option("--radius", orbit.radius);
    epi->add_option("--frames", orbit.n_frames);
    epi->add_option("--row", orbit.scanline_row, "Scanline row");
    epi->add_option("--angle-start", orbit.angle_start, "Radians");
    epi->add_option("--angle-end", orbit.angle_end, "Radians");
    epi->add_option("--width", orbit.width);
    epi->add_option("--height", orbit.height);
    epi->add_option("--fov", orbit.fov_x, "Horizontal field of view in radians");
    add_render_flags(epi, render_args);

    std::vector<double> sigmas{1.0, 3.0, 100.0};
    int samples = 241;
    auto *profile = app.add_subcommand("profile", "Opacity profiles of a unit sphere over impact parameter");
    profile->add_option("--sigma", sigmas, "Densities")->delimiter(',');
    profile->add_option("--samples", samples);
    profile->add_option("out", out, "CSV path, or - for stdout")->required();

    VerifyOptions vopt;
    int random_n = 0;
    auto *verify = app.add_subcommand("verify", "Run oracle, permutation, BVH and gradient suites");
    verify->add_option("scene", scene_path, "Scene file");
    verify->add_option("--random", random_n, "Also check N random scenes");
    verify->add_option("--rays", vopt.rays, "Rays per scene");
    verify->add_option("--steps", vopt.steps, "Quadrature cells per ray");
    verify->add_option("--refine", vopt.refine_levels, "Quadrature boundary refinement levels");
    verify->add_option("--fd-res", vopt.fd_resolution, "Gradient probe resolution (0 skips)");
    verify->add_option("--seed", vopt.seed);

    std::string dataset_dir, config_path, init_path, resume_dir;
    int steps = -1, seed_count = 10000;
    auto *trainc = app.add_subcommand("train", "Optimize a scene against a posed-image dataset");
    trainc->add_option("dataset", dataset_dir, "Dataset directory")->required();
    trainc->add_option("config", config_path, "Training config JSON")->required();
    trainc->add_option("out", out, "Checkpoint directory")->required();
    trainc->add_option("--init", init_path, "Initial scene (default: <dataset>/init.json, else seeded)");
    trainc->add_option("--resume", resume_dir, "Resume from a checkpoint directory");
    trainc->add_option("--steps", steps, "Steps to run (default: up to the configured iterations)");
    trainc->add_option("--seed-count", seed_count, "Primitives seeded when there is no initial scene");

    SyntheticOptions syn;
    int extra = 8, threads = 0;
    auto *make = app.add_subcommand("make-dataset", "Write the synthetic training dataset");
    make->add_option("out", out, "Dataset directory")->required();
    make->add_option("--seed", syn.seed);
    make->add_option("--primitives", syn.n_primitives);
    make->add_option("--resolution", syn.resolution);
    make->add_option("--train-views", syn.n_train);
    make->add_option("--test-views", syn.n_test);
    make->add_option("--extra", extra, "Faint extra primitives in the initial scene");
    make->add_option("--threads", threads);

    auto *flat = app.add_subcommand("flatland", "Write the two-sphere flatland scene");
    flat->add_option("out", out, "Scene path")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (*render) return cmd_render(scene_path, out, cam_args, render_args);
        if (*epi) {
            orbit.center = to_vec(center);
            return cmd_epi(scene_path, out, orbit, render_args);
        }
        if (*profile) return cmd_profile(sigmas, out, samples);
        if (*verify) return cmd_verify(scene_path, random_n, vopt);
        if (*trainc) return cmd_train(dataset_dir, config_path, out, init_path, resume_dir, steps, seed_count);
        if (*make) return cmd_make_dataset(out, syn, extra, threads);
        if (*flat) {
            save_scene(out, flatland_scene());
            std::printf("wrote %s\n", out.c_str());
            return 0;
        }
    } catch (const ExitCode &e) {
        return e.code;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitInvalid;
    }
    return 0;
}
