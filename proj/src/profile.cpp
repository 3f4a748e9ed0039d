#include "tritok/profile.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "tritok/error.hpp"
#include "tritok/lifting.hpp"
#include "tritok/tokenizer.hpp"

namespace tritok {

BackboneSpec backbone_preset(const std::string& name) {
    if (name == "1B") return {name, 2048, 16};
    if (name == "3B") return {name, 3072, 28};
    if (name == "7B") return {name, 4096, 32};
    throw config_error("unknown backbone '" + name + "' (expected 1B, 3B or 7B)");
}

double prefill_flops(const BackboneSpec& b, std::size_t tokens) {
    const double l = static_cast<double>(tokens), d = static_cast<double>(b.d_model);
    return static_cast<double>(b.layers) * (24 * l * d * d + 4 * l * l * d);
}

TimingStats time_runs(const std::function<void()>& fn, std::size_t runs) {
    if (runs == 0) throw config_error("time_runs: runs must be positive");
    fn();
    std::vector<double> ms(runs);
    for (auto& m : ms) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        m = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }
    TimingStats s;
    s.runs = runs;
    for (double m : ms) s.mean_ms += m;
    s.mean_ms /= static_cast<double>(runs);
    if (runs > 1) {
        double var = 0;
        for (double m : ms) var += (m - s.mean_ms) * (m - s.mean_ms);
        var /= static_cast<double>(runs - 1);
        s.ci95_ms = 1.96 * std::sqrt(var / static_cast<double>(runs));
    }
    return s;
}

bool ProfileReport::all_passed() const {
    for (const auto& c : checks)
        if (!c.passed) return false;
    return true;
}

void ProfileReport::write_csv(const std::filesystem::path& path) const {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open '" + path.string() + "' for writing");
    os << "tokenizer,patch,halfplane,cameras,frames,backbone,tokens,tokens_per_image,tokenizer_ms_mean,"
          "tokenizer_ms_ci95,timing_runs,prefill_gflops\n";
    for (const auto& r : rows) {
        os << r.tokenizer << ',' << r.patch << ',' << (r.halfplane ? 1 : 0) << ',' << r.cameras << ',' << r.frames
           << ',' << r.backbone << ',' << r.tokens << ',' << r.tokens_per_image << ',';
        if (r.tokenizer_time.runs > 0)
            os << r.tokenizer_time.mean_ms << ',' << r.tokenizer_time.ci95_ms << ',' << r.tokenizer_time.runs;
        else
            os << ",,0";
        os << ',' << r.prefill_gflops << '\n';
    }
}

namespace {

std::string patch_name(const PatchConfig& p) {
    return std::to_string(p.px) + "x" + std::to_string(p.py) + "x" + std::to_string(p.pz);
}

GridWarp timing_warp(const std::array<std::size_t, 3>& c) {
    GridWarp w{AxisWarp::symmetric(c[0], static_cast<double>(c[0]) / 4, 1.0, 2.0),
               AxisWarp::symmetric(c[1], static_cast<double>(c[1]) / 4, 1.0, 2.0),
               AxisWarp::bottom_up(c[2], static_cast<double>(c[2]) * 3 / 4, 0.5, 2.5, -3.0)};
    w.validate();
    return w;
}

std::vector<Tensor<float>> random_images(std::size_t n, std::size_t h, std::size_t w, Rng& rng) {
    std::vector<Tensor<float>> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(uniform_init<float>({h, w, 3}, 1.0f, rng));
    return out;
}

// Per-frame tokenizer timing, keyed by (tokenizer label, cameras).
std::map<std::pair<std::string, std::size_t>, TimingStats> measure(const ExperimentConfig& cfg) {
    const ProfileConfig& p = cfg.profile;
    std::map<std::pair<std::string, std::size_t>, TimingStats> out;
    Rng rng = derive_rng(cfg.seed, "profile");
    NoGradGuard guard;

    ParamStore<float> store;
    const std::size_t bp = p.baseline_patch;
    const Linear<float> embed = Linear<float>::create(store, "baseline.embed", bp * bp * 3, cfg.tokenize.d_ar, rng);

    const GridWarp warp = timing_warp(p.timing_cells);
    LiftConfig lc = cfg.model.lift;
    lc.feature_dim = cfg.model.feature_dim;
    const Lifter<float> lifter = Lifter<float>::create(store, warp, lc, rng);
    std::vector<TokenProjector<float>> projectors;
    for (const auto& pc : p.patches) {
        pc.validate(warp.cells());
        ParamStore<float> own;
        projectors.push_back(TokenProjector<float>::create(own, lc.feature_dim, pc, rng));
    }

    for (std::size_t n : p.cameras) {
        const CameraRig rig = make_front_rig(n, p.timing_height, p.timing_width);
        const auto images = random_images(n, p.timing_height, p.timing_width, rng);
        out[{"baseline", n}] = time_runs(
            [&] {
                for (const auto& im : images) project_tokens(patchify_plane(im, bp, bp), embed);
            },
            p.runs);
        for (std::size_t k = 0; k < p.patches.size(); ++k) {
            out[{patch_name(p.patches[k]), n}] = time_runs(
                [&] { tokenize(lifter(images, rig), projectors[k], p.patches[k], rig.front_facing); }, p.runs);
        }
    }
    return out;
}

TimingStats scaled(const TimingStats& s, std::size_t frames) {
    return {s.mean_ms * static_cast<double>(frames), s.ci95_ms * static_cast<double>(frames), s.runs};
}

}  // namespace

ProfileReport run_profile(const ExperimentConfig& cfg, bool measure_time) {
    const ProfileConfig& p = cfg.profile;
    if (p.cameras.empty() || p.frames.empty() || p.backbones.empty())
        throw config_error("profile: cameras, frames and backbones must be non-empty");
    const auto cells = cfg.warp.build().cells();
    for (const auto& pc : p.patches) pc.validate(cells);
    std::vector<BackboneSpec> backbones;
    for (const auto& b : p.backbones) backbones.push_back(backbone_preset(b));

    std::map<std::pair<std::string, std::size_t>, TimingStats> timing;
    if (measure_time) timing = measure(cfg);
    auto timing_for = [&](const std::string& key, std::size_t n, std::size_t f) {
        const auto it = timing.find({key, n});
        return it == timing.end() ? TimingStats{} : scaled(it->second, f);
    };

    ProfileReport r;
    const std::string bname = std::to_string(p.baseline_patch);
    for (std::size_t n : p.cameras)
        for (std::size_t f : p.frames)
            for (const auto& b : backbones) {
                ProfileRow row{"baseline", bname, false, n, f, b.name, 0, 0, timing_for("baseline", n, f), 0};
                row.tokens = baseline_token_count(p.image_height, p.image_width, p.baseline_patch, n, f);
                row.tokens_per_image = static_cast<double>(row.tokens) / static_cast<double>(n * f);
                row.prefill_gflops = prefill_flops(b, row.tokens) * 1e-9;
                r.rows.push_back(row);
                for (const auto& pc : p.patches) {
                    ProfileRow t{"triplane", patch_name(pc), pc.halfplane, n, f, b.name, 0, 0,
                                 timing_for(patch_name(pc), n, f), 0};
                    t.tokens = f * token_count(cells, pc);
                    t.tokens_per_image = static_cast<double>(t.tokens) / static_cast<double>(n * f);
                    t.prefill_gflops = prefill_flops(b, t.tokens) * 1e-9;
                    r.rows.push_back(t);
                }
            }

    const std::size_t per_image = baseline_token_count(p.image_height, p.image_width, p.baseline_patch, 1, 1);
    {
        ProfileCheck c{"baseline tokens linear in cameras x frames", true, ""};
        for (const auto& row : r.rows)
            if (row.tokenizer == "baseline" && row.tokens != row.cameras * row.frames * per_image) {
                c.passed = false;
                c.detail = std::to_string(row.cameras) + " cameras x " + std::to_string(row.frames) + " frames gave " +
                           std::to_string(row.tokens);
            }
        if (c.passed) c.detail = std::to_string(per_image) + " tokens per image";
        r.checks.push_back(c);
    }
    {
        ProfileCheck c{"triplane tokens constant in cameras, linear in frames", true, ""};
        for (const auto& row : r.rows) {
            if (row.tokenizer != "triplane") continue;
            for (const auto& pc : p.patches)
                if (patch_name(pc) == row.patch && pc.halfplane == row.halfplane &&
                    row.tokens != row.frames * token_count(cells, pc)) {
                    c.passed = false;
                    c.detail = row.patch + " at " + std::to_string(row.cameras) + " cameras gave " +
                               std::to_string(row.tokens);
                }
        }
        r.checks.push_back(c);
    }
    {
        // Single source of truth: run the tokenizer on a grid-sized triplane.
        ProfileCheck c{"profiler counts equal tokenizer output", true, ""};
        NoGradGuard guard;
        const GridWarp w = cfg.warp.build();
        const Triplane<float> tp = Triplane<float>::filled(w, 1, 1.0f);
        Rng rng = derive_rng(cfg.seed, "profile.check");
        for (const auto& pc : p.patches) {
            PatchConfig small = pc;
            small.d_ar = 1;
            ParamStore<float> store;
            const auto proj = TokenProjector<float>::create(store, 1, small, rng);
            const std::size_t got = tokenize(tp, proj, small, true).length();
            if (got != token_count(cells, pc)) {
                c.passed = false;
                c.detail = patch_name(pc) + ": tokenizer " + std::to_string(got) + " vs count " +
                           std::to_string(token_count(cells, pc));
            }
        }
        r.checks.push_back(c);
    }
    for (const auto& pc : p.patches) {
        const double tri = static_cast<double>(token_count(cells, pc)) / 4.0;
        r.reductions.emplace_back(patch_name(pc) + (pc.halfplane ? " halfplane" : ""),
                                  1.0 - tri / static_cast<double>(per_image));
    }
    {
        ProfileCheck c{"prefill savings grow with camera count", true, ""};
        for (const auto& pc : p.patches)
            for (std::size_t f : p.frames)
                for (const auto& b : backbones) {
                    double prev = -std::numeric_limits<double>::infinity();
                    for (std::size_t n : p.cameras) {
                        const double base = prefill_flops(b, baseline_token_count(p.image_height, p.image_width,
                                                                                  p.baseline_patch, n, f));
                        const double saving = base - prefill_flops(b, f * token_count(cells, pc));
                        if (!(saving > prev)) {
                            c.passed = false;
                            c.detail = patch_name(pc) + " " + b.name + " frames " + std::to_string(f);
                        }
                        prev = saving;
                    }
                }
        r.checks.push_back(c);
    }
    if (measure_time) {
        ProfileCheck c{"measured triplane tokenizer time grows with camera count", true, ""};
        std::ostringstream detail;
        for (const auto& pc : p.patches) {
            double prev = -1;
            for (std::size_t n : p.cameras) {
                const TimingStats& t = timing.at({patch_name(pc), n});
                detail << patch_name(pc) << "@" << n << "=" << t.mean_ms << "ms ";
                if (!(t.mean_ms > prev)) c.passed = false;
                prev = t.mean_ms;
            }
        }
        c.detail = detail.str();
        r.checks.push_back(c);
    }
    return r;
}

}  // namespace tritok
