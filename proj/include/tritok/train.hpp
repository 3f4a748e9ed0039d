#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tritok/config.hpp"
#include "tritok/lifting.hpp"
#include "tritok/nn.hpp"
#include "tritok/renderer.hpp"
#include "tritok/scene.hpp"
#include "tritok/triplane.hpp"

namespace tritok {

// Scene, training rig and held-out rig with their ground-truth renders.
struct SceneData {
    SyntheticScene scene;
    CameraRig rig, heldout;
    std::vector<GroundTruthView> views, heldout_views;

    template <typename T>
    std::vector<Tensor<T>> images() const;
};

SceneData make_scene_data(const ExperimentConfig& cfg);

// Either free triplane parameters ("direct") or a lifter that builds the
// triplane from the training images ("lift"), plus the shared decoder.
template <typename T>
struct Model {
    ModelConfig config;
    GridWarp warp;
    ParamStore<T> store;
    Triplane<T> planes;
    DecoderMLP<T> decoder;
    std::optional<Lifter<T>> lifter;

    static Model create(const ExperimentConfig& cfg);
    Triplane<T> triplane(const std::vector<Tensor<T>>& images, const CameraRig& rig) const;
};

struct CameraScore {
    std::string camera;
    double psnr = 0, ssim = 0;
};

struct EvalReport {
    std::vector<CameraScore> cameras;
    double mean_psnr = 0, mean_ssim = 0;
    nlohmann::json to_json() const;
};

// Renders every camera of `rig` (jitter off) and scores it against `views`.
EvalReport evaluate(const Model<float>& model, const Triplane<float>& triplane, const RenderConfig& render,
                    const CameraRig& rig, const std::vector<GroundTruthView>& views);

struct StepStats {
    std::size_t step = 0;  // 1-based index of the step just taken
    double loss = 0;
    double batch_psnr = 0;
    double lr_scale = 1;
};

struct TrainSummary {
    std::size_t steps = 0;
    double seconds = 0;
    std::vector<double> losses;
    EvalReport train_views, heldout_views;
};

class Trainer {
   public:
    explicit Trainer(ExperimentConfig cfg);

    const ExperimentConfig& config() const { return cfg_; }
    const SceneData& data() const { return data_; }
    const Model<float>& model() const { return model_; }
    std::size_t steps_done() const { return adam_.steps_taken(); }

    // One optimisation step on a batch derived from (seed, step index). A
    // non-finite loss writes <out_dir>/last_good.tpln and throws.
    StepStats step();

    // Steps until train.steps, writing metrics.jsonl, periodic evaluations
    // and checkpoints under out_dir.
    TrainSummary run(const std::function<void(const StepStats&)>& on_step = {});

    // Parameters, optimizer state and step counter; the resolved config goes
    // next to it as <path>.json.
    void save(const std::filesystem::path& path) const;
    void resume(const std::filesystem::path& path);

    Triplane<float> current_triplane() const;
    EvalReport evaluate_training_views() const;
    EvalReport evaluate_heldout() const;

   private:
    ExperimentConfig cfg_;
    SceneData data_;
    Model<float> model_;
    Adam<float> adam_;
    std::vector<Tensor<float>> images_;
    std::unique_ptr<PerceptualMetric<float>> perceptual_;
};

// Model and config restored from a checkpoint written by Trainer::save.
struct LoadedModel {
    ExperimentConfig config;
    Model<float> model;
};
LoadedModel load_model(const std::filesystem::path& checkpoint);
std::filesystem::path config_sidecar(const std::filesystem::path& checkpoint);

}  // namespace tritok
