// tritok: train, render, evaluate, tokenize and profile triplane tokenizers.
//
//   tritok train --config desk.json
//   tritok render --ckpt runs/desk/checkpoint.tpln --camera 1 --out view.png
//   tritok tokenize --ckpt runs/desk/checkpoint.tpln --patch 4,4,4 --halfplane --out tokens.bin
//   tritok profile --cameras 1,4,7 --frames 1,2,4,6 --patch 4,6,6 --patch 8,8,8 --out report.csv
//
// Failures print one line "error kind=<kind> message=<json string>" on
// stderr and exit nonzero. TRITOK_NUM_THREADS caps the worker count.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tritok/config.hpp"
#include "tritok/error.hpp"
#include "tritok/parallel.hpp"
#include "tritok/profile.hpp"
#include "tritok/tokenizer.hpp"
#include "tritok/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tritok;

namespace {

std::vector<std::size_t> parse_list(const std::string& s, const std::string& what) {
    std::vector<std::size_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const unsigned long v = std::stoul(item, &used);
            if (used != item.size()) throw std::invalid_argument(item);
            out.push_back(v);
        } catch (const std::exception&) {
            throw config_error(what + ": '" + item + "' is not a non-negative integer");
        }
    }
    if (out.empty()) throw config_error(what + ": empty list");
    return out;
}

PatchConfig parse_patch(const std::string& s, const PatchConfig& base) {
    const auto v = parse_list(s, "--patch");
    if (v.size() != 3) throw config_error("--patch expects px,py,pz, got '" + s + "'");
    PatchConfig p = base;
    p.px = v[0];
    p.py = v[1];
    p.pz = v[2];
    return p;
}

ExperimentConfig config_or_desk(const std::string& path) { return path.empty() ? desk_config() : load_config(path); }

std::size_t camera_index(const CameraRig& rig, const std::string& key) {
    for (std::size_t c = 0; c < rig.size(); ++c)
        if (rig.at(c).name == key) return c;
    try {
        std::size_t used = 0;
        const std::size_t c = std::stoul(key, &used);
        if (used == key.size() && c < rig.size()) return c;
    } catch (const std::exception&) {
    }
    throw config_error("no camera '" + key + "' in a rig of " + std::to_string(rig.size()));
}

json scene_json(const SyntheticScene& s) {
    auto v3 = [](const Vec3& v) { return json::array({v.x, v.y, v.z}); };
    json boxes = json::array(), spheres = json::array();
    for (const auto& b : s.boxes) boxes.push_back({{"lo", v3(b.lo)}, {"hi", v3(b.hi)}, {"albedo", b.albedo}});
    for (const auto& p : s.spheres)
        spheres.push_back({{"center", v3(p.center)}, {"radius", p.radius}, {"albedo", p.albedo}});
    return {{"boxes", boxes},
            {"spheres", spheres},
            {"ground", {{"enabled", s.ground.enabled}, {"height", s.ground.height}, {"half_extent", s.ground.half_extent}}},
            {"background", s.background}};
}

Triplane<float> model_triplane(const LoadedModel& m, const SceneData& data) {
    NoGradGuard guard;
    return m.model.triplane(m.model.lifter ? data.images<float>() : std::vector<Tensor<float>>{}, data.rig);
}

int cmd_train(const std::string& config, const std::string& out, std::size_t steps, const std::string& resume) {
    ExperimentConfig cfg = config_or_desk(config);
    if (!out.empty()) cfg.train.out_dir = out;
    if (steps > 0) cfg.train.steps = steps;
    Trainer trainer(cfg);
    if (!resume.empty()) trainer.resume(resume);
    std::cout << "training " << cfg.train.steps << " steps into " << cfg.train.out_dir << " (" << thread_count()
              << " threads)\n";
    const TrainSummary s = trainer.run([](const StepStats& st) {
        if (st.step % 100 == 0)
            std::printf("step %5zu  loss %.5f  batch psnr %.2f dB  lr x%.3f\n", st.step, st.loss, st.batch_psnr,
                        st.lr_scale);
    });
    json j = {{"steps", s.steps}, {"seconds", s.seconds}, {"train_views", s.train_views.to_json()}};
    if (!s.heldout_views.cameras.empty()) j["heldout"] = s.heldout_views.to_json();
    std::cout << j.dump(2) << '\n';
    return 0;
}

int cmd_render(const std::string& ckpt, const std::string& camera, const std::string& out, const std::string& depth,
               bool heldout) {
    const LoadedModel m = load_model(ckpt);
    const SceneData data = make_scene_data(m.config);
    const CameraRig& rig = heldout ? data.heldout : data.rig;
    const std::size_t c = camera_index(rig, camera);
    RenderConfig rc = m.config.render;
    rc.jitter = false;
    rc.aggregation = m.model.config.aggregation;
    const RenderedView v = render_image(model_triplane(m, data), m.model.decoder, rig, c, rc);
    write_png(out, v.rgb);
    if (!depth.empty()) write_pfm(depth, v.depth);
    const auto& gt = heldout ? data.heldout_views[c] : data.views[c];
    std::printf("%s: psnr %.2f dB  ssim %.4f -> %s\n", rig.at(c).name.c_str(), psnr(gt.rgb, v.rgb), ssim(gt.rgb, v.rgb),
                out.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& json_out) {
    const LoadedModel m = load_model(ckpt);
    const SceneData data = make_scene_data(m.config);
    const Triplane<float> tp = model_triplane(m, data);
    json j = {{"train_views", evaluate(m.model, tp, m.config.render, data.rig, data.views).to_json()}};
    if (data.heldout.size() > 0)
        j["heldout"] = evaluate(m.model, tp, m.config.render, data.heldout, data.heldout_views).to_json();
    for (const char* key : {"train_views", "heldout"}) {
        if (!j.contains(key)) continue;
        std::cout << key << '\n';
        for (const auto& c : j[key]["cameras"])
            std::printf("  %-10s psnr %6.2f dB  ssim %.4f\n", c["camera"].get<std::string>().c_str(),
                        c["psnr"].get<double>(), c["ssim"].get<double>());
        std::printf("  %-10s psnr %6.2f dB  ssim %.4f\n", "mean", j[key]["mean_psnr"].get<double>(),
                    j[key]["mean_ssim"].get<double>());
    }
    if (!json_out.empty()) {
        std::ofstream os(json_out);
        if (!os) throw io_error("cannot open '" + json_out + "' for writing");
        os << j.dump(2) << '\n';
    }
    return 0;
}

int cmd_tokenize(const std::string& ckpt, const std::string& patch, bool halfplane, std::size_t d_ar,
                 const std::string& out) {
    const LoadedModel m = load_model(ckpt);
    const SceneData data = make_scene_data(m.config);
    PatchConfig pc = m.config.tokenize;
    if (!patch.empty()) pc = parse_patch(patch, pc);
    if (halfplane) pc.halfplane = true;
    if (d_ar > 0) pc.d_ar = d_ar;
    pc.validate(m.model.warp.cells());
    ParamStore<float> store;
    Rng rng = derive_rng(m.config.seed, "tokenizer");
    const auto proj = TokenProjector<float>::create(store, m.model.config.feature_dim, pc, rng);
    NoGradGuard guard;
    const TokenSequence<float> seq = tokenize(model_triplane(m, data), proj, pc, data.rig.front_facing);
    write_tokens(out, seq);
    write_token_sidecar(out + ".jsonl", seq);
    std::printf("%zu tokens x %zu -> %s\n", seq.length(), pc.d_ar, out.c_str());
    return 0;
}

int cmd_profile(const std::string& config, const std::string& cameras, const std::string& frames,
                const std::vector<std::string>& patches, bool full_planes, const std::string& backbones,
                std::size_t runs, bool no_timing, const std::string& out) {
    ExperimentConfig cfg = config.empty() ? ExperimentConfig{} : load_config(config);
    ProfileConfig& p = cfg.profile;
    if (!cameras.empty()) p.cameras = parse_list(cameras, "--cameras");
    if (!frames.empty()) p.frames = parse_list(frames, "--frames");
    if (!patches.empty()) {
        PatchConfig base;
        base.halfplane = !full_planes;
        p.patches.clear();
        for (const auto& s : patches) p.patches.push_back(parse_patch(s, base));
    }
    if (!backbones.empty()) {
        p.backbones.clear();
        std::stringstream ss(backbones);
        std::string b;
        while (std::getline(ss, b, ',')) p.backbones.push_back(b);
    }
    if (runs > 0) p.runs = runs;
    const ProfileReport r = run_profile(cfg, !no_timing);
    r.write_csv(out);
    std::printf("%-10s %-6s %-4s %4s %4s %8s %8s %12s %14s\n", "tokenizer", "patch", "cams", "frm", "bb", "tokens",
                "tok/img", "tok ms", "prefill GFLOP");
    for (const auto& row : r.rows)
        std::printf("%-10s %-6s %-4zu %4zu %4s %8zu %8.1f %12.3f %14.1f\n", row.tokenizer.c_str(), row.patch.c_str(),
                    row.cameras, row.frames, row.backbone.c_str(), row.tokens, row.tokens_per_image,
                    row.tokenizer_time.mean_ms, row.prefill_gflops);
    for (const auto& [name, v] : r.reductions)
        std::printf("per-image token reduction vs baseline at 4 cameras, %s: %.4f%%\n", name.c_str(), 100 * v);
    for (const auto& c : r.checks)
        std::printf("[%s] %s %s\n", c.passed ? "ok" : "FAIL", c.name.c_str(), c.detail.c_str());
    std::printf("report -> %s\n", out.c_str());
    return r.all_passed() ? 0 : 3;
}

int cmd_gen_scene(const std::string& config, std::uint64_t seed, bool seed_set, const std::string& out) {
    ExperimentConfig cfg = config_or_desk(config);
    if (seed_set) cfg.scene.seed = seed;
    const SceneData data = make_scene_data(cfg);
    fs::create_directories(out);
    {
        std::ofstream os(fs::path(out) / "scene.json");
        if (!os) throw io_error("cannot write into '" + out + "'");
        os << scene_json(data.scene).dump(2) << '\n';
    }
    auto dump = [&](const CameraRig& rig, const std::vector<GroundTruthView>& views) {
        for (std::size_t c = 0; c < rig.size(); ++c) {
            write_png(fs::path(out) / (rig.at(c).name + ".png"), views[c].rgb);
            write_pfm(fs::path(out) / (rig.at(c).name + "_depth.pfm"), views[c].depth);
        }
    };
    dump(data.rig, data.views);
    dump(data.heldout, data.heldout_views);
    std::printf("scene seed %llu: %zu boxes, %zu spheres, %zu + %zu views -> %s\n",
                static_cast<unsigned long long>(cfg.scene.seed), data.scene.boxes.size(), data.scene.spheres.size(),
                data.rig.size(), data.heldout.size(), out.c_str());
    return 0;
}

void print_error(std::string_view kind, const std::string& message) {
    std::cerr << "error kind=" << kind << " message=" << json(message).dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Triplane multi-camera tokenizer"};
    app.require_subcommand(1);

    std::string config, out, ckpt, camera, depth, resume, patch, json_out, cameras, frames, backbones;
    std::size_t steps = 0, d_ar = 0, runs = 0;
    std::uint64_t seed = 0;
    bool halfplane = false, heldout = false, full_planes = false, no_timing = false;
    std::vector<std::string> patches;

    auto* train = app.add_subcommand("train", "Fit a triplane model to a synthetic scene");
    train->add_option("--config", config, "Experiment config (JSON); defaults to the desk config");
    train->add_option("--out", out, "Output directory (overrides train.out_dir)");
    train->add_option("--steps", steps, "Step count (overrides train.steps)");
    train->add_option("--resume", resume, "Checkpoint to resume from");

    auto* render = app.add_subcommand("render", "Render one camera from a checkpoint");
    render->add_option("--ckpt", ckpt, "Checkpoint")->required();
    render->add_option("--camera", camera, "Camera index or name")->required();
    render->add_option("--out", out, "Output PNG")->required();
    render->add_option("--depth", depth, "Optional depth PFM");
    render->add_flag("--heldout", heldout, "Pick the camera from the held-out rig");

    auto* eval = app.add_subcommand("eval", "PSNR / SSIM on training and held-out cameras");
    eval->add_option("--ckpt", ckpt, "Checkpoint")->required();
    eval->add_option("--json", json_out, "Also write the report as JSON");

    auto* tok = app.add_subcommand("tokenize", "Write the token sequence of a checkpoint's triplane");
    tok->add_option("--ckpt", ckpt, "Checkpoint")->required();
    tok->add_option("--patch", patch, "px,py,pz");
    tok->add_flag("--halfplane", halfplane, "Drop the rear half of the xy and xz planes");
    tok->add_option("--d-ar", d_ar, "Token width");
    tok->add_option("--out", out, "Token file")->required();

    auto* prof = app.add_subcommand("profile", "Token-count and cost scaling report");
    prof->add_option("--config", config, "Experiment config; defaults to the 96 x 96 x 48 grid");
    prof->add_option("--cameras", cameras, "Camera counts, e.g. 1,4,7");
    prof->add_option("--frames", frames, "Frame counts, e.g. 1,2,4,6");
    prof->add_option("--patch", patches, "Patch config px,py,pz (repeatable)");
    prof->add_flag("--full-planes", full_planes, "Keep both plane halves for --patch configs");
    prof->add_option("--backbones", backbones, "Backbone presets, e.g. 1B,3B,7B");
    prof->add_option("--runs", runs, "Timing repetitions (>= 100 for the report)");
    prof->add_flag("--no-timing", no_timing, "Skip wall-clock measurement");
    prof->add_option("--out", out, "CSV report")->required();

    auto* gen = app.add_subcommand("gen-scene", "Generate a scene and its ground-truth views");
    gen->add_option("--config", config, "Experiment config; defaults to the desk config");
    auto* seed_opt = gen->add_option("--seed", seed, "Scene seed");
    gen->add_option("--out", out, "Output directory")->default_val("scene");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        print_error("usage", e.what());
        return 2;
    }

    try {
        if (*train) return cmd_train(config, out, steps, resume);
        if (*render) return cmd_render(ckpt, camera, out, depth, heldout);
        if (*eval) return cmd_eval(ckpt, json_out);
        if (*tok) return cmd_tokenize(ckpt, patch, halfplane, d_ar, out);
        if (*prof) return cmd_profile(config, cameras, frames, patches, full_planes, backbones, runs, no_timing, out);
        if (*gen) return cmd_gen_scene(config, seed, seed_opt->count() > 0, out);
    } catch (const Error& e) {
        print_error(to_string(e.kind()), e.what());
        return 1;
    } catch (const std::exception& e) {
        print_error("internal", e.what());
        return 1;
    }
    return 0;
}
