#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "tritok/geometry.hpp"
#include "tritok/image.hpp"
#include "tritok/nn.hpp"
#include "tritok/triplane.hpp"

namespace tritok {

enum class SamplingSpace {
    kMetric,  // uniform in metres along the ray
    kWarp,    // uniform in contracted (grid-cell) distance along the ray
};

struct RenderConfig {
    std::size_t samples = 64;
    double t_near = 0.2;
    // <= 0 selects the per-ray exit distance from the warp's metric box.
    double t_far = 0.0;
    std::array<double, 3> background{0, 0, 0};
    bool jitter = false;
    SamplingSpace space = SamplingSpace::kWarp;
    Aggregation aggregation = Aggregation::kProduct;

    void validate() const;
};

// Distance along a ray from its origin to where it leaves the warp's metric
// box (0 if it misses).
double exit_distance(const GridWarp& warp, const Ray& ray);

// Sample distances t_i (sorted, in [t_near, t_far]) and spacings
// delta_i = t_{i+1} - t_i, with the last spacing running to t_far.
struct RaySamples {
    std::vector<double> t, delta;
};
RaySamples sample_ray(const GridWarp& warp, const Ray& ray, const RenderConfig& cfg, Rng* jitter_rng);

// Per-ray compositing trace, for inspection and property tests.
struct RayTrace {
    RaySamples samples;
    std::vector<double> sigma, weight;
    std::vector<std::array<double, 3>> rgb;
    std::array<double, 3> color{};
    double depth = 0, opacity = 0;
    double residual_transmittance = 1;
};

template <typename T>
struct RenderOutput {
    Tensor<T> rgb;      // [R, 3]
    Tensor<T> depth;    // [R] expected depth, metres
    Tensor<T> opacity;  // [R] sum of weights
};

// Volumetric rendering through the triplane and decoder:
//   C = sum_i T_i (1 - exp(-sigma_i delta_i)) c_i + T_N * background
//   T_i = exp(-sum_{j<i} sigma_j delta_j)
//   depth = sum_i w_i t_i / max(sum_i w_i, eps)
// Samples outside the metric extent have zero density. This is a fused
// kernel with an analytic backward into the three planes and the decoder.
template <typename T>
RenderOutput<T> render_rays(const Triplane<T>& triplane, const DecoderMLP<T>& decoder, std::span<const Ray> rays,
                            const RenderConfig& cfg, Rng* jitter_rng = nullptr, bool track_gradients = true);

// Same quantity assembled from generic tensor ops (query_points, decoder,
// composite). Slower; serves as the second route for the fused kernel.
template <typename T>
RenderOutput<T> render_rays_reference(const Triplane<T>& triplane, const DecoderMLP<T>& decoder,
                                      std::span<const Ray> rays, const RenderConfig& cfg);

// Alpha compositing over per-sample density [R,N] and colour [R,N,3] with
// fixed distances; returns [R,5] = (r, g, b, depth, opacity).
template <typename T>
Tensor<T> composite(const Tensor<T>& sigma, const Tensor<T>& rgb, const std::vector<RaySamples>& samples,
                    const std::array<double, 3>& background);

template <typename T>
RayTrace trace_ray(const Triplane<T>& triplane, const DecoderMLP<T>& decoder, const Ray& ray,
                   const RenderConfig& cfg);

struct RenderedView {
    Image rgb;      // H x W x 3
    Image depth;    // H x W x 1
    Image opacity;  // H x W x 1
};

template <typename T>
RenderedView render_image(const Triplane<T>& triplane, const DecoderMLP<T>& decoder, const CameraRig& rig,
                          std::size_t camera, const RenderConfig& cfg);

// -- losses ----------------------------------------------------------------

// Stand-in for a learned perceptual distance; must be differentiable in the
// prediction. Images are [H, W, C].
template <typename T>
class PerceptualMetric {
   public:
    virtual ~PerceptualMetric() = default;
    virtual Tensor<T> operator()(const Tensor<T>& target, const Tensor<T>& prediction) const = 0;
};

// Mean L1 distance between finite-difference image gradients, averaged over
// the levels of a Gaussian pyramid (binomial 5-tap blur, factor-2 decimation).
template <typename T>
class GradientPyramidL1 final : public PerceptualMetric<T> {
   public:
    explicit GradientPyramidL1(std::size_t levels = 3) : levels_(levels) {}
    Tensor<T> operator()(const Tensor<T>& target, const Tensor<T>& prediction) const override;

   private:
    std::size_t levels_;
};

struct LossConfig {
    double lambda_perceptual = 0.5;
    double lambda_l1 = 0.5;
    double lambda_depth = 0.0;
    std::string perceptual = "gradient_pyramid";

    void validate() const;
};

template <typename T>
std::unique_ptr<PerceptualMetric<T>> make_perceptual(const std::string& id);

// lambda_p * perceptual(I, I_hat) + lambda_1 * mean |I - I_hat|. The
// perceptual term needs [H, W, C] inputs and is skipped when its weight is 0.
template <typename T>
Tensor<T> reconstruction_loss(const Tensor<T>& target, const Tensor<T>& prediction, const LossConfig& cfg,
                              const PerceptualMetric<T>* perceptual = nullptr);

// lambda * mean |d - d_hat| over entries with a nonzero mask (all when the
// mask is empty).
template <typename T>
Tensor<T> depth_loss(const Tensor<T>& target, const Tensor<T>& prediction, double lambda,
                     std::span<const std::uint8_t> valid = {});

// Linear image operators used by the perceptual term.
template <typename T>
Tensor<T> image_gradient(const Tensor<T>& image, std::size_t axis);  // forward difference along 0 (rows) or 1
template <typename T>
Tensor<T> pyramid_down(const Tensor<T>& image);

// -- metrics ---------------------------------------------------------------

inline constexpr double kPsnrCapDb = 100.0;

double mse(const Image& a, const Image& b);
// 10 log10(1 / MSE) for images in [0, 1], capped at 100 dB.
double psnr(const Image& a, const Image& b);
// Mean SSIM over channels: 11x11 Gaussian window (sigma 1.5), valid region,
// C1 = 0.01^2, C2 = 0.03^2.
double ssim(const Image& a, const Image& b);

}  // namespace tritok
