#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "tritok/geometry.hpp"
#include "tritok/image.hpp"

namespace tritok {

using Rgb = std::array<double, 3>;

struct Box {
    Vec3 lo, hi;
    Rgb albedo{0.5, 0.5, 0.5};
    bool operator==(const Box&) const = default;
};

struct Sphere {
    Vec3 center;
    double radius = 1;
    Rgb albedo{0.5, 0.5, 0.5};
    bool operator==(const Sphere&) const = default;
};

// Finite square at z = height, |x|, |y| <= half_extent, with a two-tone
// checkerboard of `tile` metres.
struct Ground {
    bool enabled = true;
    double height = 0;
    double half_extent = 20;
    double tile = 4;
    Rgb albedo_a{0.45, 0.45, 0.42}, albedo_b{0.35, 0.36, 0.33};
    bool operator==(const Ground&) const = default;
};

struct SyntheticScene {
    std::vector<Box> boxes;
    std::vector<Sphere> spheres;
    Ground ground;
    Rgb background{0.6, 0.75, 0.9};
    Vec3 light{0.4, 0.3, 0.866};  // direction towards the light
    double ambient = 0.35;

    // Every primitive inside the warp's metric extent.
    void validate(const GridWarp& warp) const;
    bool operator==(const SyntheticScene&) const = default;
};

struct SceneGenConfig {
    std::uint64_t seed = 0;
    std::size_t boxes = 4, spheres = 2;
    // Object footprint region in the ego frame (metres).
    double x_min = 5, x_max = 16, y_min = -8, y_max = 8;
    double size_min = 1.0, size_max = 3.0;
    bool ground = true;
    double ground_half_extent = 20;
};

SyntheticScene generate_scene(const SceneGenConfig& cfg);

// Nearest intersection. primitive: index into boxes, then spheres, then the
// ground (boxes.size() + spheres.size()).
struct Hit {
    double t = 0;
    Vec3 normal;
    Rgb albedo{};
    std::size_t primitive = 0;
};
std::optional<Hit> intersect(const SyntheticScene& scene, const Ray& ray);

// Lambert shading of the nearest hit, or the background.
Rgb shade(const SyntheticScene& scene, const Ray& ray);

struct GroundTruthView {
    Image rgb;    // H x W x 3
    Image depth;  // H x W x 1, metres along the ray; 0 where nothing is hit
    std::vector<std::uint8_t> hit;
};

GroundTruthView render_ground_truth(const SyntheticScene& scene, const CameraRig& rig, std::size_t camera);

}  // namespace tritok
