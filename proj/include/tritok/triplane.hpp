#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tritok/geometry.hpp"
#include "tritok/nn.hpp"
#include "tritok/tensor.hpp"

namespace tritok {

enum class PlaneId : std::uint8_t { kXY = 0, kXZ = 1, kYZ = 2 };

std::string_view plane_name(PlaneId id);  // "xy", "xz", "yz"

// Which grid axes span plane `id` (rows, columns).
std::array<std::size_t, 2> plane_axes(PlaneId id);

enum class Aggregation { kProduct, kSum };

// Three axis-aligned feature planes over a warped grid:
//   xy: [S_x, S_y, D]   xz: [S_x, S_z, D]   yz: [S_y, S_z, D]
// Plane row/column i holds the feature at grid cell centre grid_min + i + 0.5.
template <typename T>
struct Triplane {
    Tensor<T> xy, xz, yz;
    GridWarp warp;

    const Tensor<T>& plane(PlaneId id) const;
    Tensor<T>& plane(PlaneId id);
    std::size_t feature_dim() const { return xy.dim(2); }
    std::array<Tensor<T>, 3> planes() const { return {xy, xz, yz}; }

    // Extents match the warp's cell counts and all features are finite.
    void validate() const;

    // Registers "plane.xy", "plane.xz", "plane.yz" with 1 + N(0, stddev) values.
    static Triplane create(ParamStore<T>& store, const GridWarp& warp, std::size_t feature_dim, T stddev,
                           Rng& rng);
    static Triplane filled(const GridWarp& warp, std::size_t feature_dim, T value);
};

// Continuous plane index coordinate for a grid coordinate on `axis`.
inline double plane_index(const AxisWarp& axis, double grid) { return grid - axis.grid_min - 0.5; }

// Bilinear interpolation of plane [S_i, S_j, D] at continuous index coords
// (coords[2m], coords[2m+1]); integer coords hit stored features exactly.
// Coordinates are clamped to [0, S-1] (clamp-to-edge). Differentiable with
// respect to the plane.
template <typename T>
Tensor<T> sample_plane(const Tensor<T>& plane, std::span<const double> coords);

template <typename T>
struct PointQuery {
    Tensor<T> features;          // [M, D]
    std::vector<std::uint8_t> inside;  // 1 when the point lies in the warp's metric extent
};

// f = f_xy (.) f_xz (.) f_yz for each metric point (sum with Aggregation::kSum).
template <typename T>
PointQuery<T> query_points(const Triplane<T>& triplane, std::span<const Vec3> points,
                           Aggregation aggregation = Aggregation::kProduct);

// Plane index coordinates of a metric point: {xy_a, xy_b, xz_a, xz_b, yz_a, yz_b}.
std::array<double, 6> plane_coords(const GridWarp& warp, const Vec3& p);

template <typename T>
struct Decoded {
    Tensor<T> rgb;    // [M, 3] in [0, 1]
    Tensor<T> sigma;  // [M], >= 0, 1/m
};

// D -> hidden -> hidden -> 4 with ReLU; colour through sigmoid, density
// through softplus.
template <typename T>
struct DecoderMLP {
    Linear<T> l0, l1, l2;

    static DecoderMLP create(ParamStore<T>& store, std::size_t feature_dim, std::size_t hidden, Rng& rng,
                             T density_bias = T(0));
    std::size_t feature_dim() const { return l0.in_features(); }
    std::size_t hidden() const { return l0.out_features(); }
    std::vector<Tensor<T>> parameters() const { return {l0.weight, l0.bias, l1.weight, l1.bias, l2.weight, l2.bias}; }

    Decoded<T> operator()(const Tensor<T>& features) const;
};

}  // namespace tritok
