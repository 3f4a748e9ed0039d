#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tritok/nn.hpp"
#include "tritok/triplane.hpp"

namespace tritok {

enum class HalfKeep : std::uint8_t { kFront = 0, kRear = 1 };

struct PatchConfig {
    std::size_t px = 4, py = 6, pz = 6;  // patch sizes in cells
    std::size_t d_ar = 256;
    bool halfplane = false;
    HalfKeep keep = HalfKeep::kFront;  // which x-half of xy / xz survives the reduction

    std::size_t patch(std::size_t axis) const { return axis == 0 ? px : (axis == 1 ? py : pz); }
    // Divisibility against the grid; names the offending axis.
    void validate(const std::array<std::size_t, 3>& cells) const;
};

// Token grid (rows, cols) per plane after optional halving.
std::array<std::array<std::size_t, 2>, 3> token_grid(const std::array<std::size_t, 3>& cells, const PatchConfig& cfg);
std::array<std::size_t, 3> plane_token_counts(const std::array<std::size_t, 3>& cells, const PatchConfig& cfg);
std::size_t token_count(const std::array<std::size_t, 3>& cells, const PatchConfig& cfg);

// N * F * ceil(H / patch) * ceil(W / patch) for an image-patch tokenizer.
std::size_t baseline_token_count(std::size_t height, std::size_t width, std::size_t patch, std::size_t cameras,
                                 std::size_t frames);

// [S_i, S_j, D] -> [S_i/p_i, S_j/p_j, p_i p_j D]; patch (a, b) holds
// P[a p_i + u, b p_j + v, d] at ((u p_j) + v) D + d.
template <typename T>
Tensor<T> patchify_plane(const Tensor<T>& plane, std::size_t pi, std::size_t pj);
template <typename T>
Tensor<T> unpatchify_plane(const Tensor<T>& patches, std::size_t pi, std::size_t pj);

// Drops the unobserved x-half of xy and xz; yz is untouched. Requires a rig
// declared front-facing.
template <typename T>
std::array<Tensor<T>, 3> halfplane_reduce(const Triplane<T>& triplane, bool front_facing,
                                          HalfKeep keep = HalfKeep::kFront);

// Patches [a, b, K] -> tokens [a b, D_AR] through an affine map.
template <typename T>
Tensor<T> project_tokens(const Tensor<T>& patches, const Linear<T>& projection);

// One affine map per plane, "tokenizer.xy" / ".xz" / ".yz".
template <typename T>
struct TokenProjector {
    std::array<Linear<T>, 3> planes;

    static TokenProjector create(ParamStore<T>& store, std::size_t feature_dim, const PatchConfig& cfg, Rng& rng);
    bool matches(std::size_t feature_dim, const PatchConfig& cfg) const;
};

struct TokenProvenance {
    PlaneId plane = PlaneId::kXY;
    std::uint32_t row = 0, col = 0;  // patch index within the (possibly halved) plane
    bool operator==(const TokenProvenance&) const = default;
};

inline constexpr std::uint32_t kTokenOrderingVersion = 1;  // xy, xz, yz; row-major within a plane

template <typename T>
struct TokenSequence {
    Tensor<T> tokens;  // [L, D_AR]
    std::vector<TokenProvenance> provenance;
    PatchConfig config;
    std::uint32_t ordering_version = kTokenOrderingVersion;

    std::size_t length() const { return provenance.size(); }
};

template <typename T>
TokenSequence<T> tokenize(const Triplane<T>& triplane, const TokenProjector<T>& projector, const PatchConfig& cfg,
                          bool front_facing);

// Provenance in canonical order for a grid and patch config.
std::vector<TokenProvenance> token_provenance(const std::array<std::size_t, 3>& cells, const PatchConfig& cfg);

// Binary layout (little-endian): "TPTK", u32 version, u32 L, u32 D_AR,
// u32 px, py, pz, u8 halfplane, u8 keep, u32 ordering, f32 tokens[L * D_AR],
// then per token u8 plane, u32 row, u32 col.
void write_tokens(const std::filesystem::path& path, const TokenSequence<float>& seq);
TokenSequence<float> read_tokens(const std::filesystem::path& path);
// One JSON header line, then one line per token.
void write_token_sidecar(const std::filesystem::path& path, const TokenSequence<float>& seq);

}  // namespace tritok
