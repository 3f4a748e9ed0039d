#include "tritok/train.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "tritok/checkpoint.hpp"
#include "tritok/error.hpp"
#include "tritok/parallel.hpp"

namespace tritok {

namespace fs = std::filesystem;

template <typename T>
std::vector<Tensor<T>> SceneData::images() const {
    std::vector<Tensor<T>> out;
    for (const auto& v : views) out.push_back(v.rgb.to_tensor<T>());
    return out;
}

SceneData make_scene_data(const ExperimentConfig& cfg) {
    SceneData d;
    const GridWarp warp = cfg.warp.build();
    d.scene = generate_scene(cfg.scene);
    d.scene.background = cfg.render.background;
    d.scene.validate(warp);
    d.rig = cfg.rig.build();
    for (std::size_t c = 0; c < d.rig.size(); ++c) d.views.push_back(render_ground_truth(d.scene, d.rig, c));
    if (!cfg.rig.heldout_yaws_deg.empty()) {
        d.heldout = cfg.rig.build_heldout();
        for (std::size_t c = 0; c < d.heldout.size(); ++c)
            d.heldout_views.push_back(render_ground_truth(d.scene, d.heldout, c));
    }
    return d;
}

template <typename T>
Model<T> Model<T>::create(const ExperimentConfig& cfg) {
    Model m;
    m.config = cfg.model;
    m.warp = cfg.warp.build();
    Rng rng = derive_rng(cfg.seed, "model");
    if (m.config.mode == ModelMode::kDirect) {
        m.planes = Triplane<T>::create(m.store, m.warp, m.config.feature_dim, static_cast<T>(m.config.plane_init_std), rng);
    } else {
        LiftConfig lc = m.config.lift;
        lc.feature_dim = m.config.feature_dim;
        m.lifter = Lifter<T>::create(m.store, m.warp, lc, rng);
    }
    m.decoder = DecoderMLP<T>::create(m.store, m.config.feature_dim, m.config.hidden, rng,
                                      static_cast<T>(m.config.density_bias));
    return m;
}

template <typename T>
Triplane<T> Model<T>::triplane(const std::vector<Tensor<T>>& images, const CameraRig& rig) const {
    if (!lifter) return planes;
    return (*lifter)(images, rig);
}

template struct Model<float>;
template struct Model<double>;
template std::vector<Tensor<float>> SceneData::images<float>() const;
template std::vector<Tensor<double>> SceneData::images<double>() const;

nlohmann::json EvalReport::to_json() const {
    nlohmann::json cams = nlohmann::json::array();
    for (const auto& c : cameras) cams.push_back({{"camera", c.camera}, {"psnr", c.psnr}, {"ssim", c.ssim}});
    return {{"cameras", cams}, {"mean_psnr", mean_psnr}, {"mean_ssim", mean_ssim}};
}

EvalReport evaluate(const Model<float>& model, const Triplane<float>& triplane, const RenderConfig& render,
                    const CameraRig& rig, const std::vector<GroundTruthView>& views) {
    if (views.size() != rig.size())
        throw config_error("evaluate: " + std::to_string(views.size()) + " views for " + std::to_string(rig.size()) +
                           " cameras");
    RenderConfig rc = render;
    rc.jitter = false;
    rc.aggregation = model.config.aggregation;
    EvalReport r;
    for (std::size_t c = 0; c < rig.size(); ++c) {
        const RenderedView v = render_image(triplane, model.decoder, rig, c, rc);
        r.cameras.push_back({rig.at(c).name, psnr(views[c].rgb, v.rgb), ssim(views[c].rgb, v.rgb)});
        r.mean_psnr += r.cameras.back().psnr;
        r.mean_ssim += r.cameras.back().ssim;
    }
    if (!r.cameras.empty()) {
        r.mean_psnr /= static_cast<double>(r.cameras.size());
        r.mean_ssim /= static_cast<double>(r.cameras.size());
    }
    return r;
}

namespace {

AdamConfig adam_config(const TrainConfig& t) {
    AdamConfig a;
    a.lr = t.lr_decoder;
    a.final_lr_fraction = t.final_lr_fraction;
    a.total_steps = t.steps;
    return a;
}

struct Batch {
    std::vector<Ray> rays;
    std::vector<float> rgb, depth;
    std::vector<std::uint8_t> hit;
};

void gather(const ExperimentConfig& cfg, const SceneData& data, std::size_t cam, const std::vector<Pixel>& pixels,
            Batch& b) {
    const auto rays = camera_rays(data.rig, cam, pixels, cfg.render.t_near, cfg.render.t_far);
    b.rays.insert(b.rays.end(), rays.begin(), rays.end());
    const GroundTruthView& v = data.views[cam];
    for (const Pixel& p : pixels) {
        for (std::size_t k = 0; k < 3; ++k) b.rgb.push_back(v.rgb.at(p.row, p.col, k));
        b.depth.push_back(v.depth.at(p.row, p.col, 0));
        b.hit.push_back(v.hit[p.row * v.rgb.width + p.col]);
    }
}

Batch make_batch(const ExperimentConfig& cfg, const SceneData& data, std::size_t step) {
    Rng rng = derive_rng(cfg.seed, "batch", step);
    std::uniform_int_distribution<std::size_t> pick_cam(0, data.rig.size() - 1);
    Batch b;
    if (cfg.train.batch_mode == BatchMode::kRays) {
        // Grouped by camera so each group shares one camera_rays call.
        std::vector<std::vector<Pixel>> per_cam(data.rig.size());
        for (std::size_t i = 0; i < cfg.train.rays; ++i) {
            const std::size_t c = pick_cam(rng);
            const Camera& cam = data.rig.at(c);
            per_cam[c].push_back({std::uniform_int_distribution<std::size_t>(0, cam.height - 1)(rng),
                                  std::uniform_int_distribution<std::size_t>(0, cam.width - 1)(rng)});
        }
        for (std::size_t c = 0; c < per_cam.size(); ++c)
            if (!per_cam[c].empty()) gather(cfg, data, c, per_cam[c], b);
    } else {
        const std::size_t p = cfg.train.patch;
        for (std::size_t k = 0; k < cfg.train.patches; ++k) {
            const std::size_t c = pick_cam(rng);
            const Camera& cam = data.rig.at(c);
            const std::size_t r0 = std::uniform_int_distribution<std::size_t>(0, cam.height - p)(rng);
            const std::size_t c0 = std::uniform_int_distribution<std::size_t>(0, cam.width - p)(rng);
            std::vector<Pixel> px;
            for (std::size_t r = 0; r < p; ++r)
                for (std::size_t q = 0; q < p; ++q) px.push_back({r0 + r, c0 + q});
            gather(cfg, data, c, px, b);
        }
    }
    return b;
}

void append_jsonl(const fs::path& path, const nlohmann::json& j) {
    std::ofstream os(path, std::ios::app);
    if (!os) throw io_error("cannot append to '" + path.string() + "'");
    os << j.dump() << '\n';
}

}  // namespace

fs::path config_sidecar(const fs::path& checkpoint) { return fs::path(checkpoint.string() + ".json"); }

Trainer::Trainer(ExperimentConfig cfg)
    : cfg_(std::move(cfg)), adam_(adam_config(cfg_.train)) {
    cfg_.validate();
    data_ = make_scene_data(cfg_);
    model_ = Model<float>::create(cfg_);
    adam_.set_group_lr("plane.", cfg_.train.lr_planes);
    adam_.set_group_lr("decoder.", cfg_.train.lr_decoder);
    adam_.set_group_lr("encoder.", cfg_.train.lr_encoder);
    adam_.set_group_lr("lift.", cfg_.train.lr_encoder);
    if (model_.lifter) images_ = data_.images<float>();
    if (cfg_.train.batch_mode == BatchMode::kPatches && cfg_.loss.lambda_perceptual > 0)
        perceptual_ = make_perceptual<float>(cfg_.loss.perceptual);
}

StepStats Trainer::step() {
    const std::size_t index = adam_.steps_taken();
    const Batch b = make_batch(cfg_, data_, index);
    const std::size_t n = b.rays.size();

    model_.store.zero_grad();
    RenderConfig rc = cfg_.render;
    rc.aggregation = model_.config.aggregation;
    Rng jitter = derive_rng(cfg_.seed, "jitter", index);
    const Triplane<float> tp = model_.triplane(images_, data_.rig);
    const RenderOutput<float> out = render_rays(tp, model_.decoder, std::span<const Ray>(b.rays), rc, &jitter);

    const Tensor<float> target = Tensor<float>::from({n, 3}, b.rgb);
    Tensor<float> loss;
    if (cfg_.train.batch_mode == BatchMode::kRays) {
        // Scattered rays carry no image structure, so only the L1 term applies.
        LossConfig lc = cfg_.loss;
        lc.lambda_perceptual = 0;
        loss = reconstruction_loss(target, out.rgb, lc);
    } else {
        const std::size_t p = cfg_.train.patch, pp = p * p;
        for (std::size_t k = 0; k < cfg_.train.patches; ++k) {
            const Tensor<float> t = reshape(narrow(target, 0, k * pp, pp), {p, p, 3});
            const Tensor<float> y = reshape(narrow(out.rgb, 0, k * pp, pp), {p, p, 3});
            const Tensor<float> l = reconstruction_loss(t, y, cfg_.loss, perceptual_.get());
            loss = loss.defined() ? add(loss, l) : l;
        }
        loss = scale(loss, 1.0f / static_cast<float>(cfg_.train.patches));
    }
    if (cfg_.loss.lambda_depth > 0)
        loss = add(loss, depth_loss(Tensor<float>::from({n}, b.depth), out.depth, cfg_.loss.lambda_depth,
                                    std::span<const std::uint8_t>(b.hit)));

    const double value = loss.item();
    if (!std::isfinite(value)) {
        const fs::path dir(cfg_.train.out_dir);
        fs::create_directories(dir);
        save(dir / "last_good.tpln");
        throw numeric_error("non-finite loss at step " + std::to_string(index + 1) + "; last good state in " +
                            (dir / "last_good.tpln").string());
    }
    loss.backward();
    adam_.step(model_.store);

    double se = 0;
    const auto pred = out.rgb.data();
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = static_cast<double>(pred[i]) - b.rgb[i];
        se += d * d;
    }
    const double m = se / static_cast<double>(pred.size());
    return {index + 1, value, m < 1e-10 ? kPsnrCapDb : 10 * std::log10(1 / m), adam_.lr_scale()};
}

Triplane<float> Trainer::current_triplane() const {
    NoGradGuard guard;
    Triplane<float> tp = model_.triplane(images_.empty() ? data_.images<float>() : images_, data_.rig);
    if (!model_.lifter) return tp;
    return {tp.xy.detach(), tp.xz.detach(), tp.yz.detach(), tp.warp};
}

EvalReport Trainer::evaluate_training_views() const {
    return evaluate(model_, current_triplane(), cfg_.render, data_.rig, data_.views);
}

EvalReport Trainer::evaluate_heldout() const {
    if (data_.heldout.size() == 0) return {};
    return evaluate(model_, current_triplane(), cfg_.render, data_.heldout, data_.heldout_views);
}

TrainSummary Trainer::run(const std::function<void(const StepStats&)>& on_step) {
    const fs::path dir(cfg_.train.out_dir);
    fs::create_directories(dir);
    const fs::path log = dir / "metrics.jsonl";
    if (steps_done() == 0) std::ofstream(log, std::ios::trunc);
    save_config(dir / "config.json", cfg_);

    TrainSummary s;
    const auto t0 = std::chrono::steady_clock::now();
    while (steps_done() < cfg_.train.steps) {
        const StepStats st = step();
        s.losses.push_back(st.loss);
        append_jsonl(log, {{"step", st.step}, {"loss", st.loss}, {"batch_psnr", st.batch_psnr}, {"lr_scale", st.lr_scale}});
        if (on_step) on_step(st);
        const bool last = st.step == cfg_.train.steps;
        if (cfg_.train.eval_every > 0 && (st.step % cfg_.train.eval_every == 0 || last)) {
            nlohmann::json j = {{"step", st.step}, {"train_views", evaluate_training_views().to_json()}};
            if (data_.heldout.size() > 0) j["heldout"] = evaluate_heldout().to_json();
            append_jsonl(log, j);
        }
        if ((cfg_.train.checkpoint_every > 0 && st.step % cfg_.train.checkpoint_every == 0) || last)
            save(dir / "checkpoint.tpln");
    }
    s.steps = steps_done();
    s.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    s.train_views = evaluate_training_views();
    s.heldout_views = evaluate_heldout();
    return s;
}

void Trainer::save(const fs::path& path) const {
    std::vector<NamedArray> records = export_params(model_.store);
    std::vector<std::pair<std::string, Tensor<float>>> state;
    adam_.export_state(state);
    for (const auto& [name, t] : state) records.push_back(to_named_array(name, t));
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_checkpoint(path, records);
    save_config(config_sidecar(path), cfg_);
}

void Trainer::resume(const fs::path& path) {
    const std::vector<NamedArray> records = read_checkpoint(path);
    import_params(model_.store, records, true);
    std::vector<std::pair<std::string, Tensor<float>>> state;
    for (const auto& r : records)
        if (r.name.starts_with("adam.")) state.emplace_back(r.name, to_tensor<float>(r));
    if (state.empty()) throw config_error("checkpoint '" + path.string() + "' holds no optimizer state");
    adam_.import_state(model_.store, state);
}

LoadedModel load_model(const fs::path& checkpoint) {
    const fs::path sidecar = config_sidecar(checkpoint);
    if (!fs::exists(sidecar)) throw io_error("missing config sidecar '" + sidecar.string() + "'");
    LoadedModel m{load_config(sidecar), {}};
    m.model = Model<float>::create(m.config);
    import_params(m.model.store, read_checkpoint(checkpoint), true);
    return m;
}

}  // namespace tritok
