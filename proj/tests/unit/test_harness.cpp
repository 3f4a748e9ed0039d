#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "tritok/checkpoint.hpp"
#include "tritok/config.hpp"
#include "tritok/error.hpp"
#include "tritok/profile.hpp"
#include "tritok/scene.hpp"
#include "tritok/train.hpp"

using namespace tritok;
namespace fs = std::filesystem;

namespace {

bool occupied(const SyntheticScene& s, const Vec3& p) {
    for (const Box& b : s.boxes)
        if (p.x >= b.lo.x && p.x <= b.hi.x && p.y >= b.lo.y && p.y <= b.hi.y && p.z >= b.lo.z && p.z <= b.hi.z)
            return true;
    for (const Sphere& sp : s.spheres)
        if (norm(p - sp.center) <= sp.radius) return true;
    const Ground& g = s.ground;
    return g.enabled && p.z <= g.height && std::abs(p.x) <= g.half_extent && std::abs(p.y) <= g.half_extent;
}

// Small, fast training setup.
ExperimentConfig tiny_config(const std::string& out) {
    ExperimentConfig c = desk_config();
    c.rig.ring.image_height = 16;
    c.rig.ring.image_width = 24;
    c.scene.x_min = 4;
    c.scene.x_max = 8;
    c.scene.y_min = -3;
    c.scene.y_max = 3;
    c.scene.size_min = 1;
    c.scene.size_max = 2;
    c.scene.ground_half_extent = 10;
    c.warp.x = {AxisConfig::Kind::kSymmetric, 16, 4, 1.0, 2.0, 0.0, std::nullopt};
    c.warp.y = c.warp.x;
    c.warp.z = {AxisConfig::Kind::kBottomUp, 8, 4, 1.0, 2.0, -1.0, std::nullopt};
    c.model.feature_dim = 4;
    c.model.hidden = 8;
    c.render.samples = 8;
    c.train.patch = 4;
    c.train.patches = 2;
    c.train.steps = 6;
    c.train.eval_every = 0;
    c.train.checkpoint_every = 0;
    c.train.out_dir = (fs::temp_directory_path() / out).string();
    return c;
}

}  // namespace

TEST_CASE("ray intersection matches a marching oracle") {
    SceneGenConfig gen;
    gen.seed = 3;
    const SyntheticScene scene = generate_scene(gen);
    Rng rng(11);
    std::uniform_real_distribution<double> u(-1, 1);
    const double step = 0.01;
    int agree = 0, total = 0;
    for (int i = 0; i < 300; ++i) {
        Ray r;
        r.origin = {0, 0, 1.5};
        r.direction = normalized(Vec3{1, 0.6 * u(rng), 0.25 * u(rng) - 0.05});
        r.t_near = 0;
        r.t_far = 0;
        double t_first = -1;
        for (double t = 0; t < 60; t += step)
            if (occupied(scene, r.origin + r.direction * t)) {
                t_first = t;
                break;
            }
        const auto hit = intersect(scene, r);
        ++total;
        if (t_first < 0) {
            agree += !hit.has_value();
        } else if (hit) {
            agree += std::abs(hit->t - t_first) <= step + 1e-9;
        }
    }
    CHECK(agree == total);
}

TEST_CASE("scene generation is deterministic and renders background when empty") {
    SceneGenConfig gen;
    gen.seed = 5;
    CHECK(generate_scene(gen) == generate_scene(gen));
    gen.seed = 6;
    SyntheticScene other = generate_scene(gen);
    gen.seed = 5;
    CHECK_FALSE(generate_scene(gen) == other);

    SyntheticScene empty;
    empty.ground.enabled = false;
    const CameraRig rig = make_front_rig(1, 8, 12);
    const GroundTruthView v = render_ground_truth(empty, rig, 0);
    for (std::size_t p = 0; p < 8 * 12; ++p) {
        for (std::size_t c = 0; c < 3; ++c) CHECK(v.rgb.data[p * 3 + c] == static_cast<float>(empty.background[c]));
        CHECK(v.hit[p] == 0);
        CHECK(v.depth.data[p] == 0);
    }
}

TEST_CASE("config round trip and validation") {
    const ExperimentConfig c = desk_config();
    const nlohmann::json j = config_to_json(c);
    CHECK(config_to_json(config_from_json(j)) == j);

    const fs::path p = fs::temp_directory_path() / "tritok_test_config.json";
    save_config(p, c);
    CHECK(config_to_json(load_config(p)) == j);
    fs::remove(p);

    nlohmann::json bad = j;
    bad["train"]["stepz"] = 3;
    try {
        config_from_json(bad);
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::kConfig);
        CHECK(std::string(e.what()).find("train.stepz") != std::string::npos);
    }

    AxisConfig ax = c.warp.x;
    const double covered = ax.build("x").metric_max();
    ax.extent = 100.0;
    CHECK_THROWS_AS(ax.build("x"), Error);
    ax.extent = covered;
    CHECK_NOTHROW(ax.build("x"));
}

TEST_CASE("default warp config reproduces the driving grid") {
    const GridWarp w = WarpConfig().build();
    CHECK(w.x.to_ego(w.x.grid_max()) == 180);
    CHECK(w.z.to_ego(w.z.grid_min) == -3);
    CHECK(w.z.to_ego(w.z.grid_max()) == 45);
}

TEST_CASE("resumed training is bit-identical to an uninterrupted run") {
    const ExperimentConfig cfg = tiny_config("tritok_test_resume");
    Trainer straight(cfg);
    for (int i = 0; i < 6; ++i) straight.step();

    Trainer first(cfg);
    for (int i = 0; i < 3; ++i) first.step();
    const fs::path ckpt = fs::path(cfg.train.out_dir) / "half.tpln";
    fs::create_directories(cfg.train.out_dir);
    first.save(ckpt);
    CHECK(fs::exists(config_sidecar(ckpt)));

    Trainer resumed(cfg);
    resumed.resume(ckpt);
    CHECK(resumed.steps_done() == 3);
    for (int i = 0; i < 3; ++i) resumed.step();

    const auto& a = straight.model().store.entries();
    const auto& b = resumed.model().store.entries();
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        CHECK(a[k].first == b[k].first);
        CHECK(fixtures::bit_equal(a[k].second, b[k].second));
    }

    const LoadedModel loaded = load_model(ckpt);
    CHECK(config_to_json(loaded.config) == config_to_json(cfg));
    fs::remove_all(cfg.train.out_dir);
}

TEST_CASE("a diverging run stops and keeps the last good parameters") {
    ExperimentConfig cfg = tiny_config("tritok_test_nan");
    cfg.train.lr_planes = 1e30;
    cfg.train.lr_decoder = 1e30;
    fs::create_directories(cfg.train.out_dir);
    Trainer t(cfg);
    bool threw = false;
    try {
        for (int i = 0; i < 20; ++i) t.step();
    } catch (const Error& e) {
        threw = true;
        CHECK(e.kind() == ErrorKind::kNumeric);
    }
    CHECK(threw);
    CHECK(fs::exists(fs::path(cfg.train.out_dir) / "last_good.tpln"));
    fs::remove_all(cfg.train.out_dir);
}

TEST_CASE("profile token counts and scaling checks") {
    const ProfileReport r = run_profile(ExperimentConfig{}, false);
    CHECK(r.all_passed());
    for (const ProfileCheck& c : r.checks)
        if (c.name.find("time") == std::string::npos) CHECK_MESSAGE(c.passed, c.name);
    for (const ProfileRow& row : r.rows) {
        if (row.tokenizer == "baseline") CHECK(row.tokens == row.cameras * row.frames * 160);
        if (row.tokenizer == "triplane" && row.patch == "4x6x6" && row.halfplane) CHECK(row.tokens == row.frames * 416);
        if (row.tokenizer == "triplane" && row.patch == "8x8x8" && row.halfplane) CHECK(row.tokens == row.frames * 180);
        CHECK(row.tokenizer_time.runs == 0);
    }
}

TEST_CASE("prefill model") {
    const BackboneSpec b = backbone_preset("7B");
    CHECK(b.d_model == 4096);
    CHECK(b.layers == 32);
    const double L = 100, d = 4096;
    CHECK(prefill_flops(b, 100) == doctest::Approx(32 * (24 * L * d * d + 4 * L * L * d)));
    CHECK(prefill_flops(b, 200) > 2 * prefill_flops(b, 100));
    CHECK_THROWS_AS(backbone_preset("13B"), Error);
}
