#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "tritok/config.hpp"

namespace tritok {

// Decoder-only transformer shape used to model prefill cost.
struct BackboneSpec {
    std::string name;
    std::size_t d_model = 0;
    std::size_t layers = 0;
};

// "1B" (2048 wide, 16 layers), "3B" (3072, 28), "7B" (4096, 32).
BackboneSpec backbone_preset(const std::string& name);

// layers * (24 L d^2 + 4 L^2 d): projections and MLP linear in L, attention
// scores and mixing quadratic.
double prefill_flops(const BackboneSpec& backbone, std::size_t tokens);

struct TimingStats {
    double mean_ms = 0;
    double ci95_ms = 0;  // half-width, 1.96 standard errors
    std::size_t runs = 0;
};

// Times `fn` `runs` times after one warm-up call.
TimingStats time_runs(const std::function<void()>& fn, std::size_t runs);

struct ProfileRow {
    std::string tokenizer;  // "baseline" or "triplane"
    std::string patch;      // "32" or "4x6x6"
    bool halfplane = false;
    std::size_t cameras = 0, frames = 0;
    std::string backbone;
    std::size_t tokens = 0;
    double tokens_per_image = 0;
    TimingStats tokenizer_time;  // desk-scale measurement for all frames
    double prefill_gflops = 0;
};

struct ProfileCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct ProfileReport {
    std::vector<ProfileRow> rows;
    std::vector<ProfileCheck> checks;
    // 1 - triplane tokens per image / baseline tokens per image at 4 cameras.
    std::vector<std::pair<std::string, double>> reductions;

    bool all_passed() const;
    void write_csv(const std::filesystem::path& path) const;
};

// Exact token counts at the configured warp, modeled prefill per backbone,
// and tokenizer wall-clock measured on the desk-scale pipeline (lift +
// tokenize for the triplane, patch embedding for the baseline). With
// measure=false the timing columns stay empty.
ProfileReport run_profile(const ExperimentConfig& cfg, bool measure = true);

}  // namespace tritok
