#include "tritok/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "tritok/error.hpp"

namespace tritok {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& section, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw config_error("config: section '" + section + "' must be an object");
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items())
        if (!ok.contains(key)) throw config_error("config: unknown key '" + section + "." + key + "'");
}

template <typename U>
void read(const json& j, const std::string& section, const char* key, U& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<U>();
    } catch (const json::exception& e) {
        throw config_error("config: bad value for '" + section + "." + key + "': " + e.what());
    }
}

json rgb_json(const Rgb& c) { return json::array({c[0], c[1], c[2]}); }

json camera_json(const Camera& c) {
    return {{"name", c.name},
            {"fx", c.intrinsics.fx},
            {"fy", c.intrinsics.fy},
            {"cx", c.intrinsics.cx},
            {"cy", c.intrinsics.cy},
            {"rotation", c.rotation.m},
            {"translation", {c.translation.x, c.translation.y, c.translation.z}},
            {"height", c.height},
            {"width", c.width}};
}

Camera camera_from(const json& j) {
    check_keys(j, "rig.cameras[]", {"name", "fx", "fy", "cx", "cy", "rotation", "translation", "height", "width"});
    Camera c;
    const std::string s = "rig.cameras[]";
    read(j, s, "name", c.name);
    read(j, s, "fx", c.intrinsics.fx);
    read(j, s, "fy", c.intrinsics.fy);
    read(j, s, "cx", c.intrinsics.cx);
    read(j, s, "cy", c.intrinsics.cy);
    read(j, s, "rotation", c.rotation.m);
    std::array<double, 3> t{0, 0, 0};
    read(j, s, "translation", t);
    c.translation = {t[0], t[1], t[2]};
    read(j, s, "height", c.height);
    read(j, s, "width", c.width);
    return c;
}

json axis_json(const AxisConfig& a) {
    json j = {{"kind", a.kind == AxisConfig::Kind::kSymmetric ? "symmetric" : "bottom_up"},
              {"cells", a.cells},
              {"inner_cells", a.inner_cells},
              {"inner_res", a.inner_res},
              {"outer_res", a.outer_res}};
    if (a.kind == AxisConfig::Kind::kBottomUp) j["metric_min"] = a.metric_min;
    j["extent"] = a.extent ? json(*a.extent) : json(nullptr);
    return j;
}

AxisConfig axis_from(const json& j, const std::string& name, AxisConfig a) {
    const std::string s = "warp." + name;
    check_keys(j, s, {"kind", "cells", "inner_cells", "inner_res", "outer_res", "metric_min", "extent"});
    if (j.contains("kind")) {
        const std::string k = j.at("kind").get<std::string>();
        if (k == "symmetric")
            a.kind = AxisConfig::Kind::kSymmetric;
        else if (k == "bottom_up")
            a.kind = AxisConfig::Kind::kBottomUp;
        else
            throw config_error("config: " + s + ".kind must be 'symmetric' or 'bottom_up', got '" + k + "'");
    }
    read(j, s, "cells", a.cells);
    read(j, s, "inner_cells", a.inner_cells);
    read(j, s, "inner_res", a.inner_res);
    read(j, s, "outer_res", a.outer_res);
    read(j, s, "metric_min", a.metric_min);
    if (j.contains("extent")) {
        if (j.at("extent").is_null())
            a.extent.reset();
        else
            read(j, s, "extent", a.extent.emplace());
    } else if (j.contains("cells") || j.contains("inner_cells") || j.contains("inner_res") || j.contains("outer_res")) {
        // A redefined axis does not inherit the default extent.
        a.extent.reset();
    }
    return a;
}

json patch_json(const PatchConfig& p) {
    return {{"patch", {p.px, p.py, p.pz}},
            {"d_ar", p.d_ar},
            {"halfplane", p.halfplane},
            {"keep", p.keep == HalfKeep::kFront ? "front" : "rear"}};
}

PatchConfig patch_from(const json& j, const std::string& s, PatchConfig p) {
    check_keys(j, s, {"patch", "d_ar", "halfplane", "keep"});
    if (j.contains("patch")) {
        std::array<std::size_t, 3> v{};
        read(j, s, "patch", v);
        p.px = v[0];
        p.py = v[1];
        p.pz = v[2];
    }
    read(j, s, "d_ar", p.d_ar);
    read(j, s, "halfplane", p.halfplane);
    if (j.contains("keep")) {
        const std::string k = j.at("keep").get<std::string>();
        if (k != "front" && k != "rear") throw config_error("config: " + s + ".keep must be 'front' or 'rear'");
        p.keep = k == "front" ? HalfKeep::kFront : HalfKeep::kRear;
    }
    return p;
}

}  // namespace

CameraRig RigConfig::build() const {
    CameraRig rig;
    if (!cameras.empty()) {
        rig.cameras = cameras;
        rig.front_facing = true;
        for (const auto& c : rig.cameras)
            if (c.optical_axis().x <= 0) rig.front_facing = false;
    } else {
        rig = make_ring_rig(ring);
    }
    if (front_facing) rig.front_facing = *front_facing;
    rig.validate();
    return rig;
}

CameraRig RigConfig::build_heldout() const {
    RingRigSpec spec = ring;
    spec.yaws_deg = heldout_yaws_deg;
    CameraRig rig = make_ring_rig(spec);
    for (std::size_t i = 0; i < rig.cameras.size(); ++i) rig.cameras[i].name = "heldout" + std::to_string(i);
    rig.validate();
    return rig;
}

AxisWarp AxisConfig::build(const std::string& name) const {
    AxisWarp w = kind == Kind::kSymmetric ? AxisWarp::symmetric(cells, inner_cells, inner_res, outer_res)
                                          : AxisWarp::bottom_up(cells, inner_cells, inner_res, outer_res, metric_min);
    w.validate(name);
    if (extent) {
        const double far = kind == Kind::kSymmetric ? w.metric_max() : w.metric_max() - w.metric_min();
        if (std::abs(far - *extent) > 1e-9)
            throw config_error("warp." + name + ": inner/outer resolutions cover " + std::to_string(far) +
                               " m but the declared extent is " + std::to_string(*extent) + " m");
    }
    return w;
}

WarpConfig::WarpConfig() {
    x.extent = 180.0;
    y = x;
    z.kind = AxisConfig::Kind::kBottomUp;
    z.cells = 48;
    z.inner_cells = 36;
    z.inner_res = 0.5;
    z.outer_res = 2.5;
    z.metric_min = -3.0;
}

GridWarp WarpConfig::build() const {
    GridWarp w{x.build("x"), y.build("y"), z.build("z")};
    w.validate();
    return w;
}

ProfileConfig::ProfileConfig() {
    PatchConfig a;
    a.px = 4;
    a.py = 6;
    a.pz = 6;
    a.halfplane = true;
    PatchConfig b = a;
    b.px = b.py = b.pz = 8;
    patches = {a, b};
}

void ExperimentConfig::validate() const {
    const GridWarp w = warp.build();
    const CameraRig r = rig.build();
    if (!rig.heldout_yaws_deg.empty()) rig.build_heldout();
    render.validate();
    loss.validate();
    if (model.feature_dim == 0 || model.hidden == 0) throw config_error("model: feature_dim and hidden must be positive");
    if (model.mode == ModelMode::kLift) {
        LiftConfig lc = model.lift;
        lc.feature_dim = model.feature_dim;
        lc.validate();
    }
    if (train.steps == 0) throw config_error("train: steps must be positive");
    if (train.batch_mode == BatchMode::kRays && train.rays == 0) throw config_error("train: rays must be positive");
    if (train.batch_mode == BatchMode::kPatches) {
        if (train.patch < 2 || train.patches == 0) throw config_error("train: patch must be >= 2 and patches >= 1");
        for (const auto& c : r.cameras)
            if (c.height < train.patch || c.width < train.patch)
                throw config_error("train: patch " + std::to_string(train.patch) + " exceeds camera '" + c.name + "'");
    }
    if (!(train.lr_planes > 0 && train.lr_decoder > 0 && train.lr_encoder > 0))
        throw config_error("train: learning rates must be positive");
    tokenize.validate(w.cells());
    if (profile.runs == 0) throw config_error("profile: runs must be positive");
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
    json rig = {{"yaws", c.rig.ring.yaws_deg},
                {"pitch", c.rig.ring.pitch_deg},
                {"height_m", c.rig.ring.height_m},
                {"forward_offset_m", c.rig.ring.forward_offset_m},
                {"hfov", c.rig.ring.hfov_deg},
                {"image", {c.rig.ring.image_height, c.rig.ring.image_width}},
                {"heldout_yaws", c.rig.heldout_yaws_deg}};
    if (!c.rig.cameras.empty()) {
        rig["cameras"] = json::array();
        for (const auto& cam : c.rig.cameras) rig["cameras"].push_back(camera_json(cam));
    }
    if (c.rig.front_facing) rig["front_facing"] = *c.rig.front_facing;
    json profile_patches = json::array();
    for (const auto& p : c.profile.patches) profile_patches.push_back(patch_json(p));
    return {
        {"seed", c.seed},
        {"scene",
         {{"seed", c.scene.seed},
          {"boxes", c.scene.boxes},
          {"spheres", c.scene.spheres},
          {"x_range", {c.scene.x_min, c.scene.x_max}},
          {"y_range", {c.scene.y_min, c.scene.y_max}},
          {"size_range", {c.scene.size_min, c.scene.size_max}},
          {"ground", c.scene.ground},
          {"ground_half_extent", c.scene.ground_half_extent}}},
        {"rig", rig},
        {"warp", {{"x", axis_json(c.warp.x)}, {"y", axis_json(c.warp.y)}, {"z", axis_json(c.warp.z)}}},
        {"model",
         {{"mode", c.model.mode == ModelMode::kDirect ? "direct" : "lift"},
          {"feature_dim", c.model.feature_dim},
          {"hidden", c.model.hidden},
          {"plane_init_std", c.model.plane_init_std},
          {"density_bias", c.model.density_bias},
          {"aggregation", c.model.aggregation == Aggregation::kProduct ? "product" : "sum"},
          {"lift",
           {{"offsets", c.model.lift.offsets},
            {"rounds", c.model.lift.rounds},
            {"encoder_widths", c.model.lift.encoder_widths}}}}},
        {"render",
         {{"samples", c.render.samples},
          {"t_near", c.render.t_near},
          {"t_far", c.render.t_far},
          {"background", rgb_json(c.render.background)},
          {"jitter", c.render.jitter},
          {"space", c.render.space == SamplingSpace::kWarp ? "warp" : "metric"}}},
        {"loss",
         {{"lambda_perceptual", c.loss.lambda_perceptual},
          {"lambda_l1", c.loss.lambda_l1},
          {"lambda_depth", c.loss.lambda_depth},
          {"perceptual", c.loss.perceptual}}},
        {"train",
         {{"steps", c.train.steps},
          {"batch", c.train.batch_mode == BatchMode::kRays ? "rays" : "patches"},
          {"rays", c.train.rays},
          {"patch", c.train.patch},
          {"patches", c.train.patches},
          {"lr_planes", c.train.lr_planes},
          {"lr_decoder", c.train.lr_decoder},
          {"lr_encoder", c.train.lr_encoder},
          {"final_lr_fraction", c.train.final_lr_fraction},
          {"eval_every", c.train.eval_every},
          {"checkpoint_every", c.train.checkpoint_every},
          {"out_dir", c.train.out_dir}}},
        {"tokenize", patch_json(c.tokenize)},
        {"profile",
         {{"cameras", c.profile.cameras},
          {"frames", c.profile.frames},
          {"patches", profile_patches},
          {"backbones", c.profile.backbones},
          {"runs", c.profile.runs},
          {"image", {c.profile.image_height, c.profile.image_width}},
          {"baseline_patch", c.profile.baseline_patch},
          {"timing_image", {c.profile.timing_height, c.profile.timing_width}},
          {"timing_cells", c.profile.timing_cells}}},
    };
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    check_keys(j, "", {"seed", "scene", "rig", "warp", "model", "render", "loss", "train", "tokenize", "profile"});
    read(j, "", "seed", c.seed);
    if (j.contains("scene")) {
        const json& s = j.at("scene");
        check_keys(s, "scene", {"seed", "boxes", "spheres", "x_range", "y_range", "size_range", "ground", "ground_half_extent"});
        read(s, "scene", "seed", c.scene.seed);
        read(s, "scene", "boxes", c.scene.boxes);
        read(s, "scene", "spheres", c.scene.spheres);
        std::array<double, 2> r{};
        if (s.contains("x_range")) {
            read(s, "scene", "x_range", r);
            c.scene.x_min = r[0];
            c.scene.x_max = r[1];
        }
        if (s.contains("y_range")) {
            read(s, "scene", "y_range", r);
            c.scene.y_min = r[0];
            c.scene.y_max = r[1];
        }
        if (s.contains("size_range")) {
            read(s, "scene", "size_range", r);
            c.scene.size_min = r[0];
            c.scene.size_max = r[1];
        }
        read(s, "scene", "ground", c.scene.ground);
        read(s, "scene", "ground_half_extent", c.scene.ground_half_extent);
    }
    if (j.contains("rig")) {
        const json& s = j.at("rig");
        check_keys(s, "rig", {"yaws", "pitch", "height_m", "forward_offset_m", "hfov", "image", "heldout_yaws", "cameras", "front_facing"});
        read(s, "rig", "yaws", c.rig.ring.yaws_deg);
        read(s, "rig", "pitch", c.rig.ring.pitch_deg);
        read(s, "rig", "height_m", c.rig.ring.height_m);
        read(s, "rig", "forward_offset_m", c.rig.ring.forward_offset_m);
        read(s, "rig", "hfov", c.rig.ring.hfov_deg);
        if (s.contains("image")) {
            std::array<std::size_t, 2> hw{};
            read(s, "rig", "image", hw);
            c.rig.ring.image_height = hw[0];
            c.rig.ring.image_width = hw[1];
        }
        read(s, "rig", "heldout_yaws", c.rig.heldout_yaws_deg);
        if (s.contains("cameras"))
            for (const auto& cam : s.at("cameras")) c.rig.cameras.push_back(camera_from(cam));
        if (s.contains("front_facing")) c.rig.front_facing = s.at("front_facing").get<bool>();
    }
    if (j.contains("warp")) {
        const json& s = j.at("warp");
        check_keys(s, "warp", {"x", "y", "z"});
        if (s.contains("x")) c.warp.x = axis_from(s.at("x"), "x", c.warp.x);
        if (s.contains("y")) c.warp.y = axis_from(s.at("y"), "y", c.warp.y);
        if (s.contains("z")) c.warp.z = axis_from(s.at("z"), "z", c.warp.z);
    }
    if (j.contains("model")) {
        const json& s = j.at("model");
        check_keys(s, "model", {"mode", "feature_dim", "hidden", "plane_init_std", "density_bias", "aggregation", "lift"});
        if (s.contains("mode")) {
            const std::string m = s.at("mode").get<std::string>();
            if (m != "direct" && m != "lift") throw config_error("config: model.mode must be 'direct' or 'lift'");
            c.model.mode = m == "direct" ? ModelMode::kDirect : ModelMode::kLift;
        }
        read(s, "model", "feature_dim", c.model.feature_dim);
        read(s, "model", "hidden", c.model.hidden);
        read(s, "model", "plane_init_std", c.model.plane_init_std);
        read(s, "model", "density_bias", c.model.density_bias);
        if (s.contains("aggregation")) {
            const std::string a = s.at("aggregation").get<std::string>();
            if (a != "product" && a != "sum") throw config_error("config: model.aggregation must be 'product' or 'sum'");
            c.model.aggregation = a == "product" ? Aggregation::kProduct : Aggregation::kSum;
        }
        if (s.contains("lift")) {
            const json& l = s.at("lift");
            check_keys(l, "model.lift", {"offsets", "rounds", "encoder_widths"});
            read(l, "model.lift", "offsets", c.model.lift.offsets);
            read(l, "model.lift", "rounds", c.model.lift.rounds);
            read(l, "model.lift", "encoder_widths", c.model.lift.encoder_widths);
        }
    }
    c.model.lift.feature_dim = c.model.feature_dim;
    if (j.contains("render")) {
        const json& s = j.at("render");
        check_keys(s, "render", {"samples", "t_near", "t_far", "background", "jitter", "space"});
        read(s, "render", "samples", c.render.samples);
        read(s, "render", "t_near", c.render.t_near);
        read(s, "render", "t_far", c.render.t_far);
        read(s, "render", "background", c.render.background);
        read(s, "render", "jitter", c.render.jitter);
        if (s.contains("space")) {
            const std::string sp = s.at("space").get<std::string>();
            if (sp != "warp" && sp != "metric") throw config_error("config: render.space must be 'warp' or 'metric'");
            c.render.space = sp == "warp" ? SamplingSpace::kWarp : SamplingSpace::kMetric;
        }
    }
    if (j.contains("loss")) {
        const json& s = j.at("loss");
        check_keys(s, "loss", {"lambda_perceptual", "lambda_l1", "lambda_depth", "perceptual"});
        read(s, "loss", "lambda_perceptual", c.loss.lambda_perceptual);
        read(s, "loss", "lambda_l1", c.loss.lambda_l1);
        read(s, "loss", "lambda_depth", c.loss.lambda_depth);
        read(s, "loss", "perceptual", c.loss.perceptual);
    }
    if (j.contains("train")) {
        const json& s = j.at("train");
        check_keys(s, "train", {"steps", "batch", "rays", "patch", "patches", "lr_planes", "lr_decoder", "lr_encoder",
                                "final_lr_fraction", "eval_every", "checkpoint_every", "out_dir"});
        read(s, "train", "steps", c.train.steps);
        if (s.contains("batch")) {
            const std::string b = s.at("batch").get<std::string>();
            if (b != "rays" && b != "patches") throw config_error("config: train.batch must be 'rays' or 'patches'");
            c.train.batch_mode = b == "rays" ? BatchMode::kRays : BatchMode::kPatches;
        }
        read(s, "train", "rays", c.train.rays);
        read(s, "train", "patch", c.train.patch);
        read(s, "train", "patches", c.train.patches);
        read(s, "train", "lr_planes", c.train.lr_planes);
        read(s, "train", "lr_decoder", c.train.lr_decoder);
        read(s, "train", "lr_encoder", c.train.lr_encoder);
        read(s, "train", "final_lr_fraction", c.train.final_lr_fraction);
        read(s, "train", "eval_every", c.train.eval_every);
        read(s, "train", "checkpoint_every", c.train.checkpoint_every);
        read(s, "train", "out_dir", c.train.out_dir);
    }
    if (j.contains("tokenize")) c.tokenize = patch_from(j.at("tokenize"), "tokenize", c.tokenize);
    if (j.contains("profile")) {
        const json& s = j.at("profile");
        check_keys(s, "profile", {"cameras", "frames", "patches", "backbones", "runs", "image", "baseline_patch",
                                  "timing_image", "timing_cells"});
        read(s, "profile", "cameras", c.profile.cameras);
        read(s, "profile", "frames", c.profile.frames);
        if (s.contains("patches")) {
            c.profile.patches.clear();
            for (const auto& p : s.at("patches")) c.profile.patches.push_back(patch_from(p, "profile.patches[]", {}));
        }
        read(s, "profile", "backbones", c.profile.backbones);
        read(s, "profile", "runs", c.profile.runs);
        std::array<std::size_t, 2> hw{};
        if (s.contains("image")) {
            read(s, "profile", "image", hw);
            c.profile.image_height = hw[0];
            c.profile.image_width = hw[1];
        }
        read(s, "profile", "baseline_patch", c.profile.baseline_patch);
        if (s.contains("timing_image")) {
            read(s, "profile", "timing_image", hw);
            c.profile.timing_height = hw[0];
            c.profile.timing_width = hw[1];
        }
        read(s, "profile", "timing_cells", c.profile.timing_cells);
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(is, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw config_error("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& c) {
    std::ofstream os(path);
    if (!os) throw io_error("cannot open '" + path.string() + "' for writing");
    os << config_to_json(c).dump(2) << '\n';
}

ExperimentConfig desk_config() {
    ExperimentConfig c;
    c.seed = 1;
    c.scene.seed = 7;
    c.scene.boxes = 3;
    c.scene.spheres = 2;
    c.scene.x_min = 5;
    c.scene.x_max = 13;
    c.scene.y_min = -5;
    c.scene.y_max = 5;
    c.scene.ground_half_extent = 15;
    c.rig.ring.yaws_deg = {-35, 0, 35};
    c.rig.ring.pitch_deg = 8;
    c.rig.ring.hfov_deg = 60;
    c.rig.ring.image_height = 64;
    c.rig.ring.image_width = 96;
    c.rig.heldout_yaws_deg = {-17.5, 17.5};
    c.warp.x = {AxisConfig::Kind::kSymmetric, 48, 16, 0.5, 1.0, 0.0, std::nullopt};
    c.warp.y = c.warp.x;
    c.warp.z = {AxisConfig::Kind::kBottomUp, 16, 12, 0.5, 1.0, -1.0, std::nullopt};
    c.model.hidden = 32;
    c.train.lr_planes = 1e-2;
    c.render.samples = 48;
    c.render.jitter = true;
    c.render.background = {0.6, 0.75, 0.9};
    c.tokenize.px = 4;
    c.tokenize.py = 4;
    c.tokenize.pz = 4;
    c.tokenize.d_ar = 64;
    c.tokenize.halfplane = true;
    c.train.batch_mode = BatchMode::kPatches;
    c.train.patch = 16;
    c.train.patches = 4;
    c.train.out_dir = "runs/desk";
    return c;
}

}  // namespace tritok
