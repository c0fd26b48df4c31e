// SPDX-License-Identifier: Apache-2.0

// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.

#include "ever/ever.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>

namespace fs = std::filesystem;
using namespace ever;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char *f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Exact renderer against the quadrature oracle.
Outcome exactness() {
    const auto t0 = std::chrono::steady_clock::now();
    QuadratureOptions refined;
    refined.refine_levels = 12;
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        SplitMix64 rng(1001, static_cast<std::uint64_t>(k));
        const Scene s = random_scene(rng, 1 + k * 63 / 99);
        const Bvh bvh = Bvh::build(s);
        std::vector<Ray> rays;
        for (int i = 0; i < 4; ++i) rays.push_back(random_ray(rng));
        worst = std::max(worst, oracle_error(s, bvh, rays, 1 << 17, refined));
    }

    // Plain midpoint error, averaged over 64 rays in each of 20 scenes, against
    // the number of cells. Boundary offsets within a cell vary per ray, so a
    // single ray's error oscillates and only the mean halves cleanly.
    SplitMix64 rng(1002);
    std::vector<std::pair<Scene, Ray>> cases;
    for (int k = 0; k < 20; ++k) {
        const Scene s = random_scene(rng, 16);
        for (int i = 0; i < 64; ++i) {
            const Ray r = random_ray(rng);
            if (!intersect_all(s, r).empty()) cases.emplace_back(s, r);
        }
    }
    std::vector<double> mean_err;
    for (int n = 1 << 10; n <= 1 << 14; n *= 2) {
        double sum = 0.0;
        for (const auto &[s, r] : cases)
            sum += max_component(vabs(quadrature_render(s, r, n) - bruteforce_render(s, r, 0.0).color));
        mean_err.push_back(sum / static_cast<double>(cases.size()));
    }
    bool halves = true;
    std::string ratios;
    for (std::size_t i = 0; i + 1 < mean_err.size(); ++i) {
        const double ratio = mean_err[i] / mean_err[i + 1];
        halves = halves && ratio >= 1.6 && ratio <= 2.4;
        ratios += fmt("%s%.2f", i ? "," : "", ratio);
    }
    const double secs = seconds_since(t0);
    return {worst < 1e-6 && halves && secs < 300.0,
            fmt("worst=%.3g (tol 1e-6) halving ratios=%s time=%.1fs", worst, ratios.c_str(), secs)};
}

// 2. BVH traversal finds exactly the brute-force hit set.
Outcome bvh_complete() {
    bool equal = true;
    double worst_t = 0.0;
    std::size_t pairs = 0;
    for (int k = 0; k < 10; ++k) {
        SplitMix64 rng(2001, static_cast<std::uint64_t>(k));
        const Scene s = random_scene(rng, 100 * (k + 1));
        BvhOptions opt;
        opt.method = k % 2 ? SplitMethod::median : SplitMethod::binned_sah;
        const Bvh bvh = Bvh::build(s, opt);
        std::vector<Ray> rays;
        for (int i = 0; i < 10000; ++i) rays.push_back(random_ray(rng));
        const auto r = bvh_completeness(s, bvh, rays);
        equal = equal && r.sets_equal;
        worst_t = std::max(worst_t, r.max_t_error);
        pairs += r.pairs;
    }
    return {equal && worst_t <= 1e-12, fmt("rays=100000 pairs=%zu sets_equal=%s worst_t=%.3g", pairs, equal ? "yes" : "no", worst_t)};
}

// 3. Rendering does not depend on primitive order.
Outcome order_invariance() {
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        SplitMix64 rng(3001, static_cast<std::uint64_t>(k));
        const Scene s = random_scene(rng, 64);
        std::vector<Ray> rays;
        for (int i = 0; i < 200; ++i) rays.push_back(random_ray(rng));
        std::mt19937_64 shuffle(static_cast<std::uint64_t>(k));
        worst = std::max(worst, permutation_error(s, rays, shuffle, 0.0));
        worst = std::max(worst, permutation_error(s, rays, shuffle));
    }
    return {worst <= 1e-12, fmt("scenes=20 rays=4000 worst=%.3g (tol 1e-12)", worst)};
}

// 4. Flatland EPI: continuity of exact blending, popping of the global sort, blend band.
Outcome flatland_epi() {
    const Scene s = flatland_scene();
    std::vector<double> exact, splat;
    for (int frames : {512, 1024, 2048}) {
        exact.push_back(continuity(render_epi(s, flatland_orbit(frames), RenderMode::exact)).max_jump);
        splat.push_back(continuity(render_epi(s, flatland_orbit(frames), RenderMode::splatted)).max_jump);
    }
    bool linear = true;
    for (std::size_t i = 0; i + 1 < exact.size(); ++i) {
        const double ratio = exact[i] / exact[i + 1];
        linear = linear && ratio >= 1.6 && ratio <= 2.4;
    }
    bool pops = true;
    for (double j : splat) pops = pops && j > 0.05;
    const int band = blend_band_run(s, flatland_orbit(64));
    return {exact[0] < 1e-2 && linear && pops && band >= 3,
            fmt("exact jump 512/1024/2048=%.3g/%.3g/%.3g splatted jump=%.3g/%.3g/%.3g blend band=%d px", exact[0],
                exact[1], exact[2], splat[0], splat[1], splat[2], band)};
}

// 5. Adjoint gradients against finite differences.
Outcome gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (int k = 0; k < 20; ++k) {
        SplitMix64 rng(5001, static_cast<std::uint64_t>(k));
        const Scene s = random_scene(rng, 8);
        worst = std::max(worst, finite_difference_check(s, probe_camera(4), rng()).max_rel_error);
    }

    // Axis-aligned primitive viewed along z through its center: closed form.
    const Vec3 scale{0.5, 0.6, 1.0};
    const auto p = make_primitive({0, 0, 5}, scale, 0.7, {0.8, 0.3, 0.1}, 0);
    Scene s;
    s.sh_degree = s.sh_degree_active = 0;
    s.background = {0.2, 0.4, 0.6};
    s.primitives = {p};
    Ray ray;
    ray.direction = {0, 0, 1};
    const Rgb w{1.0, -0.5, 0.25};
    GradientBuffer g(s);
    IntersectionTape tape;
    taped_bruteforce_render(s, ray, 0.0, tape);
    backward_ray(tape, s, ray, w, g);
    const Rgb c = eval_color(p, ray.direction, 0);
    const double sigma = sigma_from_alpha(p.alpha, scale);
    const double chord = 2.0 * scale.z, trans = std::exp(-sigma * chord);
    const double dC_dsigma = dot(w, (c - s.background) * (chord * trans));
    const double want_alpha = dC_dsigma * 0.99 / ((1.0 - 0.99 * p.alpha) * scale.x);
    const double want_sx = dC_dsigma * (-sigma / scale.x);
    const double want_sz = dot(w, (c - s.background) * (2.0 * sigma * trans));
    auto rel = [](double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); };
    const double analytic = std::max({rel(g.prims[0].d_alpha, want_alpha), rel(g.prims[0].d_scale.x, want_sx),
                                      rel(g.prims[0].d_scale.z, want_sz), std::abs(g.prims[0].d_scale.y),
                                      std::abs(g.prims[0].d_mean.z)});
    const double secs = seconds_since(t0);
    return {worst < 1e-3 && analytic < 1e-6 && secs < 300.0,
            fmt("random worst rel=%.3g (tol 1e-3) analytic worst=%.3g (tol 1e-6) time=%.1fs", worst, analytic, secs)};
}

// 6. Opacity profiles: monotone, continuous, sharp for high density and smooth for low.
Outcome opacity_profiles() {
    const auto p = make_primitive({}, {1, 1, 1}, 0.5, {1, 1, 1}, 0);
    const Vec3 view{0, 0, 1};
    auto f = [&](double b, double sigma) { return opacity_profile(p, view, {b}, sigma)[0]; };
    // Offset in [0, 1] where the profile crosses `level`; profiles decrease in |b|.
    auto crossing = [&](double level, double sigma) {
        if (f(0.0, sigma) <= level) return 0.0;
        double lo = 0.0, hi = 1.0;
        for (int i = 0; i < 200; ++i) {
            const double mid = 0.5 * (lo + hi);
            (f(mid, sigma) > level ? lo : hi) = mid;
        }
        return 0.5 * (lo + hi);
    };
    std::vector<double> grid;
    for (int i = 0; i <= 240; ++i) grid.push_back(-1.2 + 0.01 * i);
    bool monotone = true, continuous = true;
    std::string widths;
    double w1 = 0.0, w100 = 0.0;
    for (double sigma : {1.0, 3.0, 100.0}) {
        const auto v = opacity_profile(p, view, grid, sigma);
        for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
            const bool outward = std::abs(grid[i + 1]) > std::abs(grid[i]);
            if (outward ? v[i + 1] > v[i] + 1e-15 : v[i + 1] < v[i] - 1e-15) monotone = false;
        }
        // Continuity: every intermediate level is attained (to bisection precision).
        const double peak = f(0.0, sigma);
        for (double frac : {0.1, 0.5, 0.9}) {
            const double b = crossing(frac * peak, sigma);
            if (std::abs(f(b, sigma) - frac * peak) > 1e-6) continuous = false;
        }
        // 10-90% transition: offsets where the profile passes the absolute levels 0.1 and 0.9.
        const double width = crossing(0.1, sigma) - crossing(0.9, sigma);
        widths += fmt("%s%g:%.4g", widths.empty() ? "" : " ", sigma, width);
        if (sigma == 1.0) w1 = width;
        if (sigma == 100.0) w100 = width;
    }
    return {monotone && continuous && w100 < 0.1 && w1 > 0.4,
            fmt("monotone=%s continuous=%s transition widths %s", monotone ? "yes" : "no", continuous ? "yes" : "no", widths.c_str())};
}

// 7. Density mapping and the vanished-gradient split predicate.
Outcome density_and_split() {
    const double ln505 = -std::log(0.505);
    const double e0 = std::abs(sigma_from_alpha(0.0, {1, 1, 1}));
    const double e1 = std::abs(sigma_from_alpha(0.5, {1, 1, 1}) - ln505);
    const double e2 = std::abs(sigma_from_alpha(0.5, {2, 0.5, 1}) - ln505 / 0.5);
    const bool table = e0 <= 1e-12 && e1 <= 1e-12 && e2 <= 1e-12 && std::abs(ln505 - 0.68320) < 1e-5;
    const bool fires = vanished_gradient_split(make_primitive({}, {2, 1, 1}, 0.99, {0.5, 0.5, 0.5}, 0));
    const bool quiet = !vanished_gradient_split(make_primitive({}, {1, 1, 1}, 0.99, {0.5, 0.5, 0.5}, 0));
    return {table && fires && quiet,
            fmt("sigma errors=%.2g/%.2g/%.2g split (2,1,1)=%s (1,1,1)=%s", e0, e1, e2, fires ? "fires" : "quiet",
                quiet ? "quiet" : "fires")};
}

// 8. Inverse contraction round trip.
Outcome contraction_round_trip() {
    std::mt19937_64 rng(8001);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const Vec3 d{n(rng), n(rng), n(rng)};
        const Vec3 z = normalize(d) * ((2.0 - 1e-6) * std::cbrt(u(rng)));
        worst = std::max(worst, norm(contract(uncontract(z)) - z));
    }
    return {worst < 1e-9, fmt("samples=100000 worst=%.3g (tol 1e-9)", worst)};
}

// 9 and 10. Training on the bundled dataset, then baseline separation.
struct TrainingOutcome {
    Outcome training, baselines;
};

TrainingOutcome training(const fs::path &data) {
    TrainingOutcome out;
    const fs::path dir = data / "synthetic";
    if (!fs::exists(dir / "dataset.json")) {
        out.training = out.baselines = {false, "missing dataset " + dir.string()};
        return out;
    }
    const Dataset ds = load_dataset(dir.string());
    TrainConfig cfg = load_config((dir / "train_config.json").string());
    cfg.threads = 1;
    const Scene init = load_scene((dir / "init.json").string()).scene;

    const auto t0 = std::chrono::steady_clock::now();
    TrainState state = make_train_state(init);
    const auto res = train(state, ds, cfg, cfg.iterations);
    const double secs = seconds_since(t0);
    const double held_out = evaluate_psnr(state.scene, ds.test, ds.background);
    std::size_t adc_changes = 0;
    for (const auto &r : res.adc) adc_changes += r.cloned + r.split + r.pruned;
    const bool count_changed = adc_changes > 0 && state.scene.primitives.size() != init.primitives.size();

    // Seed reproducibility: two short sequential runs with ADC active agree bitwise.
    TrainConfig short_cfg = cfg;
    const int short_steps = std::min(cfg.iterations, cfg.densify_start + cfg.densify_interval);
    TrainState a = make_train_state(init), b = make_train_state(init);
    train(a, ds, short_cfg, short_steps);
    train(b, ds, short_cfg, short_steps);
    const bool reproducible = serialize_scene(a.scene) == serialize_scene(b.scene) && a.adam.m == b.adam.m && a.adam.v == b.adam.v;

    out.training = {held_out >= 35.0 && state.step <= 5000 && secs < 600.0 && count_changed && reproducible,
                    fmt("steps=%d time=%.1fs held-out PSNR=%.2f dB primitives %zu->%zu reproducible=%s", state.step, secs,
                        held_out, init.primitives.size(), state.scene.primitives.size(), reproducible ? "yes" : "no")};

    auto with = [&](RenderMode mode) {
        return evaluate_psnr(state.scene, ds.test, ds.background, 1,
                             [mode](const Scene &s, const Bvh &bvh, const CameraModel &cam, const RenderSettings &rs) {
                                 return render_mode(mode, s, bvh, cam, rs);
                             });
    };
    const double splat = with(RenderMode::splatted), nomix = with(RenderMode::nomix);
    out.baselines = {held_out > splat && held_out > nomix,
                     fmt("held-out PSNR exact=%.2f splatted=%.2f nomix=%.2f dB (nomix %s splatted)", held_out, splat, nomix,
                         nomix > splat ? ">" : "<=")};
    return out;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Acceptance criteria"};
    std::string data = "data";
    std::set<int> only;
    app.add_option("--data", data, "Directory holding the bundled demo data");
    app.add_option("--only", only, "Run only these criteria")->delimiter(',');
    CLI11_PARSE(app, argc, argv);

    auto wanted = [&](int k) { return only.empty() || only.count(k) > 0; };
    int failures = 0;
    auto report = [&](int k, const char *name, const Outcome &o) {
        std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", k, name, o.detail.c_str());
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    };
    auto run = [&](int k, const char *name, const std::function<Outcome()> &f) {
        if (!wanted(k)) return;
        try {
            report(k, name, f());
        } catch (const std::exception &e) {
            report(k, name, {false, std::string("error: ") + e.what()});
        }
    };
    run(1, "exactness vs quadrature oracle", exactness);
    run(2, "bvh completeness", bvh_complete);
    run(3, "order invariance", order_invariance);
    run(4, "flatland epi", flatland_epi);
    run(5, "gradient correctness", gradients);
    run(6, "opacity profiles", opacity_profiles);
    run(7, "density mapping and split predicate", density_and_split);
    run(8, "inverse contraction round trip", contraction_round_trip);
    if (wanted(9) || wanted(10)) {
        TrainingOutcome t;
        try {
            t = training(data);
        } catch (const std::exception &e) {
            t.training = t.baselines = {false, std::string("error: ") + e.what()};
        }
        if (wanted(9)) report(9, "desk-scale training", t.training);
        if (wanted(10)) report(10, "baseline separation", t.baselines);
    }
    return failures == 0 ? 0 : 1;
}
