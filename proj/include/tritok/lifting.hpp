#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "tritok/geometry.hpp"
#include "tritok/nn.hpp"
#include "tritok/triplane.hpp"

namespace tritok {

// Images and feature maps are [H, W, C] tensors.
template <typename T>
class ImageEncoder {
   public:
    virtual ~ImageEncoder() = default;
    virtual std::size_t stride() const = 0;
    virtual std::size_t feature_dim() const = 0;
    virtual Tensor<T> operator()(const Tensor<T>& image) const = 0;
};

// 2-D convolution with replicate padding. x: [H, W, Ci], w: [k, k, Ci, Co],
// b: [Co] -> [(H + 2 pad - k) / stride + 1, ..., Co].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, std::size_t stride, std::size_t pad);

// 4x4 stride-2 convolutions with ReLU in between: hidden widths w_0..w_{n-1}
// then feature_dim, so n + 1 stages and total stride 2^(n+1). The default
// three hidden widths give stride 16.
template <typename T>
class ConvEncoder final : public ImageEncoder<T> {
   public:
    // Registers "encoder.conv<i>.weight" / "encoder.conv<i>.bias".
    static ConvEncoder create(ParamStore<T>& store, std::size_t in_channels, std::vector<std::size_t> widths,
                              std::size_t feature_dim, Rng& rng);

    std::size_t stride() const override { return std::size_t{1} << weights_.size(); }
    std::size_t feature_dim() const override { return biases_.back().size(); }
    Tensor<T> operator()(const Tensor<T>& image) const override;

   private:
    std::vector<Tensor<T>> weights_, biases_;
};

// Interleaved (sin, cos) pairs per axis, D/6 frequencies per axis spaced
// geometrically from 1 to 1/10000. `out` receives d values.
void sinusoidal_encode(const std::array<double, 3>& position, std::size_t d, double* out);

// Encoding of every cell centre (grid coordinates): [S_x, S_y, S_z, d].
template <typename T>
Tensor<T> sinusoidal_pe(const GridWarp& warp, std::size_t d);

// Reference locations of the query cell centres in one camera's feature map,
// as (row, col) feature-index coordinates, plus visibility.
struct CameraQueries {
    std::vector<double> reference;       // 2 per query
    std::vector<std::uint8_t> visible;   // 1 per query
    std::size_t visible_count() const;
};
CameraQueries project_queries(const GridWarp& warp, const Camera& camera, std::size_t stride);

// Bilinear samples of feature map f [H_f, W_f, D] at reference + offset for
// K offsets per query -> [M, K, D]. offsets: [M, K, 2] in feature pixels
// (row, col). Clamp-to-edge; differentiable in f and offsets.
template <typename T>
Tensor<T> sample_feature_map(const Tensor<T>& features, std::span<const double> reference, const Tensor<T>& offsets);

// Single-head deformable attention with K learned offsets around the
// projected reference point.
template <typename T>
struct DeformableAttention {
    Linear<T> offset;  // D -> 2K, zero-initialised
    Linear<T> logit;   // D -> K
    Linear<T> out;     // D -> D

    static DeformableAttention create(ParamStore<T>& store, const std::string& prefix, std::size_t d,
                                      std::size_t k, Rng& rng);
    std::size_t offsets() const { return logit.out_features(); }

    // Projected attention output for one camera, zero on invisible queries.
    Tensor<T> update(const Tensor<T>& queries, const Tensor<T>& features, const CameraQueries& cam) const;
};

// queries + the camera's update.
template <typename T>
Tensor<T> deformable_attend_per_image(const DeformableAttention<T>& attn, const Tensor<T>& queries,
                                      const Tensor<T>& features, const CameraQueries& cam);

// q + sum_c a_c u_c with a = softmax over cameras that see the query of the
// per-camera scores. Queries seen by no camera pass through. The camera sum
// runs in a canonical order so the result does not depend on camera order.
template <typename T>
Tensor<T> fuse_cameras(const Tensor<T>& queries, const std::vector<Tensor<T>>& updates,
                       const std::vector<Tensor<T>>& scores, const std::vector<const CameraQueries*>& cams);

template <typename T>
Tensor<T> cross_image_attend(const Tensor<T>& queries, const std::vector<Tensor<T>>& updates, const Linear<T>& score,
                             const std::vector<const CameraQueries*>& cams);

// Axis means of a [S_x, S_y, S_z, D] volume: xy over z, xz over y, yz over x.
template <typename T>
Triplane<T> collapse_to_triplane(const Tensor<T>& volume, const GridWarp& warp);

struct LiftConfig {
    std::size_t feature_dim = 12;
    std::size_t offsets = 4;
    std::size_t rounds = 2;
    std::size_t image_channels = 3;
    std::vector<std::size_t> encoder_widths{16, 32, 32};  // hidden widths; stride 2^(size+1)

    void validate() const;
};

template <typename T>
struct Lifter {
    LiftConfig config;
    GridWarp warp;
    std::shared_ptr<const ImageEncoder<T>> encoder;
    std::vector<DeformableAttention<T>> image_attention;  // one per round
    std::vector<Linear<T>> cross_score;                  // D -> 1, one per round

    static Lifter create(ParamStore<T>& store, const GridWarp& warp, const LiftConfig& config, Rng& rng);

    // One [H, W, C] image per rig camera.
    Triplane<T> operator()(const std::vector<Tensor<T>>& images, const CameraRig& rig) const;
};

}  // namespace tritok
