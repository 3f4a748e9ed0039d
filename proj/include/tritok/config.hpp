#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tritok/geometry.hpp"
#include "tritok/lifting.hpp"
#include "tritok/renderer.hpp"
#include "tritok/scene.hpp"
#include "tritok/tokenizer.hpp"

namespace tritok {

// Camera layout: a ring of cameras sharing one spec, or an explicit list.
struct RigConfig {
    RingRigSpec ring;
    std::vector<Camera> cameras;          // used instead of `ring` when non-empty
    std::optional<bool> front_facing;     // overrides the geometric test
    std::vector<double> heldout_yaws_deg;  // evaluation cameras built like `ring`

    CameraRig build() const;
    CameraRig build_heldout() const;
};

struct AxisConfig {
    enum class Kind { kSymmetric, kBottomUp } kind = Kind::kSymmetric;
    std::size_t cells = 96;
    double inner_cells = 36;
    double inner_res = 1.0, outer_res = 12.0;
    double metric_min = 0.0;       // bottom-up axes only
    std::optional<double> extent;  // symmetric axes: metres from the origin to the far edge

    AxisWarp build(const std::string& name) const;
};

struct WarpConfig {
    AxisConfig x, y, z;
    WarpConfig();
    GridWarp build() const;
};

enum class ModelMode { kDirect, kLift };

struct ModelConfig {
    ModelMode mode = ModelMode::kDirect;
    std::size_t feature_dim = 12;
    std::size_t hidden = 64;
    double plane_init_std = 0.1;
    double density_bias = -1.0;
    Aggregation aggregation = Aggregation::kProduct;
    LiftConfig lift;
};

enum class BatchMode { kRays, kPatches };

struct TrainConfig {
    std::size_t steps = 2000;
    BatchMode batch_mode = BatchMode::kRays;
    std::size_t rays = 1024;
    std::size_t patch = 16, patches = 4;
    double lr_planes = 1e-3;
    double lr_decoder = 1e-3;
    double lr_encoder = 1e-4;
    double final_lr_fraction = 0.1;
    std::size_t eval_every = 250;
    std::size_t checkpoint_every = 500;
    std::string out_dir = "runs/default";
};

struct ProfileConfig {
    std::vector<std::size_t> cameras{1, 4, 7};
    std::vector<std::size_t> frames{1, 2, 4, 6};
    std::vector<PatchConfig> patches;
    std::vector<std::string> backbones{"1B", "3B", "7B"};
    std::size_t runs = 100;
    std::size_t image_height = 320, image_width = 512;
    std::size_t baseline_patch = 32;
    // Desk-scale pipeline used for wall-clock measurement.
    std::size_t timing_height = 64, timing_width = 96;
    std::array<std::size_t, 3> timing_cells{16, 24, 24};

    ProfileConfig();
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    SceneGenConfig scene;
    RigConfig rig;
    WarpConfig warp;
    ModelConfig model;
    RenderConfig render;
    LossConfig loss;
    TrainConfig train;
    PatchConfig tokenize;
    ProfileConfig profile;

    void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const ExperimentConfig& c);
ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& c);

// Small scene and grid for quick end-to-end runs.
ExperimentConfig desk_config();

}  // namespace tritok
