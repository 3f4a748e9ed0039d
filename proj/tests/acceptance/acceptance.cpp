// Acceptance checks 1-8. One PASS/FAIL line per criterion; exit status is
// nonzero when any criterion fails. Pass criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "../unit/fixtures.hpp"
#include "tritok/config.hpp"
#include "tritok/lifting.hpp"
#include "tritok/profile.hpp"
#include "tritok/renderer.hpp"
#include "tritok/tokenizer.hpp"
#include "tritok/train.hpp"

using namespace tritok;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void expect(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[failed: " << what << "] ";
        }
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1 --------------------------------------------------------------------------
void token_arithmetic(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const GridWarp w = WarpConfig{}.build();
    o.expect(w.cells() == std::array<std::size_t, 3>{96, 96, 48}, "grid is 96 x 96 x 48");
    Rng rng(1);
    ParamStore<float> planes;
    const Triplane<float> tp = Triplane<float>::create(planes, w, 12, 0.1f, rng);
    NoGradGuard guard;
    struct Case {
        std::size_t px, py, pz;
        bool half;
        std::size_t expected;
    };
    for (const Case& c : {Case{4, 6, 6, false, 704}, Case{4, 6, 6, true, 416}, Case{8, 8, 8, false, 288},
                          Case{8, 8, 8, true, 180}}) {
        PatchConfig pc;
        pc.px = c.px;
        pc.py = c.py;
        pc.pz = c.pz;
        pc.halfplane = c.half;
        ParamStore<float> store;
        const auto proj = TokenProjector<float>::create(store, 12, pc, rng);
        const auto seq = tokenize(tp, proj, pc, true);
        o.expect(seq.length() == c.expected && seq.tokens.dim(0) == c.expected,
                 "L for " + std::to_string(c.px) + "," + std::to_string(c.py) + "," + std::to_string(c.pz));
        o.detail << "(" << c.px << "," << c.py << "," << c.pz << (c.half ? ") half" : ") full") << " L=" << seq.length()
                 << "; ";
        if (c.half) {
            o.expect(seq.length() % 4 == 0, "L divisible by 4 cameras");
            o.detail << "per image " << seq.length() / 4 << "; ";
        }
    }
    PatchConfig a, b;
    a.halfplane = b.halfplane = true;
    b.px = b.py = b.pz = 8;
    o.expect(token_count(w.cells(), a) / 4 == 104, "104 tokens per image");
    o.expect(token_count(w.cells(), b) / 4 == 45, "45 tokens per image");
    const double s = seconds_since(t0);
    o.expect(s < 1.0, "runtime < 1 s");
    o.detail << "runtime " << s << " s";
}

// 2 --------------------------------------------------------------------------
void warp_correctness(Outcome& o) {
    const WarpConfig wc;
    const GridWarp w = wc.build();
    o.expect(w.z.inner_res == 0.5 && w.z.outer_res == 2.5, "z resolutions 0.5 / 2.5");
    o.expect(w.z.to_ego(0) == -3.0, "z(0) = -3 m");
    o.expect(w.z.to_ego(36) == 15.0, "z(36) = 15 m");
    o.expect(w.z.to_ego(48) == 45.0, "z(48) = 45 m");
    o.expect(w.x.to_ego(w.x.grid_max()) == 180.0 && w.x.to_ego(w.x.grid_min) == -180.0, "x spans +-180 m");

    double cont = 0;
    for (std::size_t a = 0; a < 3; ++a) {
        const AxisWarp& ax = w.axis(a);
        for (double g : {ax.inner_lo, ax.inner_hi}) {
            if (g <= ax.grid_min || g >= ax.grid_max()) continue;
            const double eps = 1e-12;
            cont = std::max(cont, std::abs(ax.to_ego(g + eps) - ax.to_ego(g - eps)));
        }
    }
    o.expect(cont <= 1e-9, "continuity at the inner/outer joints");

    double trip = 0;
    Rng rng(2);
    for (std::size_t a = 0; a < 3; ++a) {
        const AxisWarp& ax = w.axis(a);
        std::uniform_real_distribution<double> ug(ax.grid_min, ax.grid_max()), um(ax.metric_min(), ax.metric_max());
        for (int i = 0; i < 1000; ++i) {
            const double p = um(rng), g = ug(rng);
            trip = std::max(trip, std::abs(ax.to_ego(ax.to_grid(p)) - p));
            trip = std::max(trip, std::abs(ax.to_grid(ax.to_ego(g)) - g));
        }
    }
    o.expect(trip < 1e-9, "round trip");
    o.detail << "z boundaries -3/15/45 m; joint gap " << cont << " m; round-trip max error " << trip;
}

// 3 --------------------------------------------------------------------------
void gradient_fidelity(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    const GridWarp w = fixtures::micro_warp();
    LiftConfig cfg;
    cfg.feature_dim = 6;
    cfg.encoder_widths = {4, 4};
    ParamStore<double> store;
    Rng rng(33);
    const auto lifter = Lifter<double>::create(store, w, cfg, rng);
    const auto dec = DecoderMLP<double>::create(store, 6, 8, rng, 0.5);
    const CameraRig rig = fixtures::micro_rig(16, 24);
    const auto images = fixtures::random_images<double>(rig, rng);
    const auto rays = fixtures::micro_rays(8, rng);
    RenderConfig rc;
    rc.samples = 8;
    std::uniform_real_distribution<double> u(0.05, 0.95);
    std::vector<double> tv(24);
    for (auto& v : tv) v = u(rng);
    // The 8 rays form a 2 x 4 image for the two-term loss.
    const auto target = Tensor<double>::from({2, 4, 3}, tv);
    LossConfig lc;
    const GradientPyramidL1<double> perceptual(2);
    auto f = [&] {
        const auto tp = lifter(images, rig);
        const auto out = render_rays(tp, dec, std::span<const Ray>(rays), rc);
        return reconstruction_loss(target, reshape(out.rgb, {2, 4, 3}), lc, &perceptual);
    };
    std::size_t visible = rig.size();
    for (std::size_t c = 0; c < rig.size(); ++c) visible = std::min(visible, project_queries(w, rig.at(c), 8).visible_count());
    o.expect(visible > 0, "every camera sees queries");
    const auto res = grad_check<double>(f, store.tensors());
    o.expect(res.max_rel_error <= 1e-4, "relative error <= 1e-4");
    const double s = seconds_since(t0);
    o.expect(s < 60, "runtime < 1 min");
    o.detail << res.coords_checked << " coordinates, max rel error " << res.max_rel_error << ", runtime " << s << " s";
}

// 4 --------------------------------------------------------------------------
void rendering_conservation(Outcome& o) {
    Rng rng(44);
    ParamStore<double> store;
    const GridWarp w = fixtures::micro_warp();
    const auto tp = Triplane<double>::create(store, w, 4, 1.0, rng);
    const auto dec = DecoderMLP<double>::create(store, 4, 16, rng, 1.0);
    RenderConfig rc;
    rc.samples = 32;
    std::uniform_real_distribution<double> pos(-2.9, 2.9), up(-0.9, 1.9), n(-1, 1);
    double min_w = 1, max_sum = 0, max_gap = 0;
    for (int i = 0; i < 10000; ++i) {
        Ray r;
        r.origin = {pos(rng), pos(rng), up(rng)};
        Vec3 d;
        do d = {n(rng), n(rng), n(rng)};
        while (norm(d) < 1e-3 || norm(d) > 1);
        r.direction = normalized(d);
        r.t_near = 0.01;
        rc.samples = (i % 2 == 0) ? 32 : 8;
        const RayTrace t = trace_ray(tp, dec, r, rc);
        double s = 0;
        for (double x : t.weight) {
            min_w = std::min(min_w, x);
            s += x;
        }
        max_sum = std::max(max_sum, s);
        max_gap = std::max(max_gap, std::abs(s + t.residual_transmittance - 1));
    }
    o.expect(min_w >= 0, "weights >= 0");
    o.expect(max_sum <= 1, "sum of weights <= 1");
    o.expect(max_gap <= 1e-6, "sum + residual transmittance = 1");
    o.detail << "10000 rays: min weight " << min_w << ", max sum " << max_sum << ", max |sum + T - 1| " << max_gap;
}

// 5 --------------------------------------------------------------------------
void overfit(Outcome& o) {
    const auto t0 = std::chrono::steady_clock::now();
    ExperimentConfig cfg = desk_config();
    cfg.train.eval_every = 0;
    cfg.train.checkpoint_every = 0;
    cfg.train.out_dir = "acceptance_overfit";
    o.expect(cfg.rig.build().size() == 3, "3 training cameras");
    o.expect(cfg.rig.ring.image_height == 64 && cfg.rig.ring.image_width == 96, "64 x 96 images");
    o.expect(cfg.train.steps <= 2000, "<= 2000 steps");
    o.expect(cfg.loss.lambda_l1 == 0.5 && cfg.loss.lambda_perceptual == 0.5, "lambda_LPIPS = lambda_1 = 0.5");
    Trainer trainer(cfg);
    const TrainSummary s = trainer.run();
    const auto& l = s.losses;
    double head = 0, tail = 0;
    for (std::size_t i = 0; i < 50; ++i) {
        head += l[i];
        tail += l[l.size() - 50 + i];
    }
    o.expect(tail < head, "smoothed loss decreases");
    o.expect(s.heldout_views.mean_psnr > 25, "held-out PSNR > 25 dB");
    o.expect(s.heldout_views.mean_ssim > 0.80, "held-out SSIM > 0.80");
    o.expect(s.train_views.mean_psnr > 25 && s.train_views.mean_ssim > 0.80, "training-pose PSNR/SSIM");
    const double secs = seconds_since(t0);
    o.expect(secs <= 900, "runtime <= 15 min");
    o.detail << s.steps << " steps in " << secs << " s; held-out poses PSNR " << s.heldout_views.mean_psnr
             << " dB SSIM " << s.heldout_views.mean_ssim << "; training poses PSNR " << s.train_views.mean_psnr
             << " dB SSIM " << s.train_views.mean_ssim << "; loss first/last 50 " << head / 50 << " / " << tail / 50;
}

// 6 --------------------------------------------------------------------------
void agnosticism(Outcome& o) {
    const GridWarp w{AxisWarp::symmetric(16, 4, 1.0, 4.0), AxisWarp::symmetric(24, 6, 1.0, 4.0),
                     AxisWarp::bottom_up(24, 18, 0.5, 2.5, -3.0)};
    LiftConfig cfg;
    ParamStore<float> store;
    Rng rng(66);
    const auto lifter = Lifter<float>::create(store, w, cfg, rng);
    PatchConfig pc;
    pc.halfplane = true;
    const auto proj = TokenProjector<float>::create(store, cfg.feature_dim, pc, rng);
    NoGradGuard guard;

    std::set<std::array<Shape, 3>> shapes;
    std::set<std::size_t> lengths;
    auto run = [&](std::size_t n, std::size_t h, std::size_t wd) {
        const CameraRig rig = make_front_rig(n, h, wd);
        const auto images = fixtures::random_images<float>(rig, rng);
        const Triplane<float> tp = lifter(images, rig);
        shapes.insert({tp.xy.shape(), tp.xz.shape(), tp.yz.shape()});
        lengths.insert(tokenize(tp, proj, pc, rig.front_facing).length());
        o.detail << n << "@" << h << "x" << wd << " ";
    };
    for (std::size_t n : {1, 4, 7}) run(n, 320, 512);
    run(4, 576, 1024);
    o.expect(shapes.size() == 1, "one triplane shape");
    o.expect(lengths.size() == 1, "one token count");

    const CameraRig rig = make_front_rig(4, 64, 96);
    const auto images = fixtures::random_images<float>(rig, rng);
    CameraRig permuted = rig;
    std::vector<Tensor<float>> pimages;
    const std::array<std::size_t, 4> order{2, 0, 3, 1};
    for (std::size_t i = 0; i < 4; ++i) {
        permuted.cameras[i] = rig.cameras[order[i]];
        pimages.push_back(images[order[i]]);
    }
    const Triplane<float> a = lifter(images, rig), b = lifter(pimages, permuted);
    const bool same = fixtures::bit_equal(a.xy, b.xy) && fixtures::bit_equal(a.xz, b.xz) &&
                      fixtures::bit_equal(a.yz, b.yz);
    o.expect(same, "camera permutation bit-exact");
    o.detail << "-> " << shapes.size() << " shape(s), L = " << *lengths.begin() << "; permutation "
             << (same ? "bit-identical" : "differs");
}

// 7 --------------------------------------------------------------------------
void scaling_report(Outcome& o) {
    ExperimentConfig cfg;
    o.expect(cfg.profile.runs >= 100, ">= 100 timing runs");
    const ProfileReport r = run_profile(cfg, true);
    r.write_csv("acceptance_profile.csv");
    for (const auto& c : r.checks) {
        o.expect(c.passed, c.name);
        o.detail << c.name << ": " << (c.passed ? "ok" : "FAIL") << "; ";
    }
    bool saw35 = false, saw72 = false;
    for (const auto& [name, v] : r.reductions) {
        o.detail << name << " " << 100 * v << "% fewer; ";
        if (name.starts_with("4x6x6") && std::lround(100 * v) == 35) saw35 = true;
        if (name.starts_with("8x8x8") && std::lround(100 * v) == 72) saw72 = true;
    }
    o.expect(saw35 && saw72, "35% and 72% reductions");
    for (const auto& row : r.rows)
        if (row.tokenizer == "triplane" && row.patch == "8x8x8" && row.frames == 6 && row.cameras == 4 &&
            row.backbone == "1B")
            o.expect(row.tokens == 1080, "6 x 180 = 1080 tokens");
    for (const auto& row : r.rows)
        if (row.tokenizer == "baseline" && row.frames == 6 && row.cameras == 4 && row.backbone == "1B")
            o.expect(row.tokens == 3840, "4 x 6 x 160 = 3840 baseline tokens");
}

// 8 --------------------------------------------------------------------------
void oracle_equivalences(Outcome& o) {
    Rng rng(88);
    std::uniform_real_distribution<double> u(-1, 1);
    auto random_tensor = [&](Shape s) {
        std::vector<double> v(shape_numel(s));
        for (auto& x : v) x = u(rng);
        return Tensor<double>::from(s, std::move(v));
    };

    bool bilinear = true;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t si = 2 + trial % 5, sj = 3 + trial % 4, d = 1 + trial % 3;
        const auto plane = random_tensor({si, sj, d});
        std::uniform_real_distribution<double> ca(-1.5, static_cast<double>(si) + 0.5), cb(-1.5, static_cast<double>(sj) + 0.5);
        std::vector<double> coords;
        for (int q = 0; q < 50; ++q) coords.insert(coords.end(), {ca(rng), cb(rng)});
        coords.insert(coords.end(), {1.0, 2.0});  // exactly on a node
        const auto got = sample_plane(plane, coords);
        const auto p = plane.data();
        for (std::size_t q = 0; q < coords.size() / 2; ++q) {
            const double a = std::min(std::max(coords[2 * q], 0.0), static_cast<double>(si - 1));
            const double b = std::min(std::max(coords[2 * q + 1], 0.0), static_cast<double>(sj - 1));
            const std::size_t i0 = static_cast<std::size_t>(a), j0 = static_cast<std::size_t>(b);
            const double fa = a - static_cast<double>(i0), fb = b - static_cast<double>(j0);
            for (std::size_t c = 0; c < d; ++c) {
                double acc = 0;
                for (std::size_t di = 0; di < 2; ++di)
                    for (std::size_t dj = 0; dj < 2; ++dj) {
                        const std::size_t i = std::min(i0 + di, si - 1), j = std::min(j0 + dj, sj - 1);
                        const double wgt = (di ? fa : 1 - fa) * (dj ? fb : 1 - fb);
                        acc += wgt * p[(i * sj + j) * d + c];
                    }
                if (acc != got.data()[q * d + c]) bilinear = false;
            }
        }
    }
    o.expect(bilinear, "bilinear sampling");

    bool collapse = true;
    for (int trial = 0; trial < 10; ++trial) {
        const std::size_t sx = 2 + trial % 3, sy = 3 + trial % 2, sz = 2 + trial % 4, d = 1 + trial % 3;
        const GridWarp w{AxisWarp::symmetric(sx, 0, 1.0, 1.0), AxisWarp::symmetric(sy, 0, 1.0, 1.0),
                         AxisWarp::bottom_up(sz, 0, 1.0, 1.0, 0.0)};
        const auto vol = random_tensor({sx, sy, sz, d});
        const auto tp = collapse_to_triplane(vol, w);
        const auto v = vol.data();
        auto at = [&](std::size_t i, std::size_t j, std::size_t k, std::size_t c) { return v[((i * sy + j) * sz + k) * d + c]; };
        for (std::size_t c = 0; c < d; ++c) {
            for (std::size_t i = 0; i < sx; ++i)
                for (std::size_t j = 0; j < sy; ++j) {
                    double acc = 0;
                    for (std::size_t k = 0; k < sz; ++k) acc += at(i, j, k, c);
                    if (acc / static_cast<double>(sz) != tp.xy.data()[(i * sy + j) * d + c]) collapse = false;
                }
            for (std::size_t i = 0; i < sx; ++i)
                for (std::size_t k = 0; k < sz; ++k) {
                    double acc = 0;
                    for (std::size_t j = 0; j < sy; ++j) acc += at(i, j, k, c);
                    if (acc / static_cast<double>(sy) != tp.xz.data()[(i * sz + k) * d + c]) collapse = false;
                }
            for (std::size_t j = 0; j < sy; ++j)
                for (std::size_t k = 0; k < sz; ++k) {
                    double acc = 0;
                    for (std::size_t i = 0; i < sx; ++i) acc += at(i, j, k, c);
                    if (acc / static_cast<double>(sx) != tp.yz.data()[(j * sz + k) * d + c]) collapse = false;
                }
        }
    }
    o.expect(collapse, "axis-mean collapse");

    bool patchify = true;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t pi = 1 + trial % 3, pj = 1 + trial % 4, d = 1 + trial % 2;
        const std::size_t si = pi * (1 + trial % 3), sj = pj * (2 + trial % 2);
        const auto plane = random_tensor({si, sj, d});
        const auto patches = patchify_plane(plane, pi, pj);
        const auto p = plane.data();
        for (std::size_t a = 0; a < si / pi; ++a)
            for (std::size_t b = 0; b < sj / pj; ++b)
                for (std::size_t x = 0; x < pi; ++x)
                    for (std::size_t y = 0; y < pj; ++y)
                        for (std::size_t c = 0; c < d; ++c) {
                            const double want = p[((a * pi + x) * sj + (b * pj + y)) * d + c];
                            const double have = patches.data()[((a * (sj / pj) + b) * pi * pj + x * pj + y) * d + c];
                            if (want != have) patchify = false;
                        }
        if (!fixtures::bit_equal(unpatchify_plane(patches, pi, pj), plane)) patchify = false;
    }
    o.expect(patchify, "patchify round trip");
    o.detail << "bilinear " << (bilinear ? "exact" : "differs") << ", collapse " << (collapse ? "exact" : "differs")
             << ", patchify " << (patchify ? "exact" : "differs");
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {"token arithmetic", token_arithmetic},
        {"warp correctness", warp_correctness},
        {"gradient fidelity", gradient_fidelity},
        {"rendering conservation", rendering_conservation},
        {"overfit property", overfit},
        {"agnosticism invariants", agnosticism},
        {"scaling report", scaling_report},
        {"oracle equivalences", oracle_equivalences},
    };
    std::set<std::size_t> only;
    for (int i = 1; i < argc; ++i) only.insert(std::stoul(argv[i]));

    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        if (!only.empty() && !only.contains(k + 1)) continue;
        Outcome o;
        try {
            criteria[k].second(o);
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail << "exception: " << e.what();
        }
        std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(),
                    o.detail.str().c_str());
        std::fflush(stdout);
        if (!o.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
