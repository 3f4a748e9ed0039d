#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tritok {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    double operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }
    double& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    bool operator==(const Vec3&) const = default;
};

inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(const Vec3& a) { return a * (1.0 / norm(a)); }

// Row-major 3x3.
struct Mat3 {
    std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

    double operator()(std::size_t r, std::size_t c) const { return m[r * 3 + c]; }
    double& operator()(std::size_t r, std::size_t c) { return m[r * 3 + c]; }
    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 transposed() const { return {{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}}; }
    static Mat3 from_rows(const Vec3& r0, const Vec3& r1, const Vec3& r2) {
        return {{r0.x, r0.y, r0.z, r1.x, r1.y, r1.z, r2.x, r2.y, r2.z}};
    }
    bool operator==(const Mat3&) const = default;
};

struct Intrinsics {
    double fx = 1, fy = 1, cx = 0, cy = 0;  // pixels
    bool operator==(const Intrinsics&) const = default;
};

// Pinhole camera; extrinsics map ego coordinates into the camera frame
// (x right, y down, z forward): x_cam = rotation * x_ego + translation.
struct Camera {
    std::string name;
    Intrinsics intrinsics;
    Mat3 rotation;
    Vec3 translation;
    std::size_t height = 0, width = 0;

    Vec3 center() const;       // camera position in the ego frame
    Vec3 optical_axis() const; // unit forward direction in the ego frame
    void validate() const;
    bool operator==(const Camera&) const = default;
};

struct CameraRig {
    std::vector<Camera> cameras;
    // Declares that only forward-looking (+x) space is observed, which
    // permits halfplane token reduction.
    bool front_facing = false;

    std::size_t size() const { return cameras.size(); }
    const Camera& at(std::size_t c) const;
    void validate() const;
    bool operator==(const CameraRig&) const = default;
};

struct Projection {
    double u = 0, v = 0;  // continuous pixel coordinates, pixel (r, c) covers [c, c+1) x [r, r+1)
    double depth = 0;     // metres along the optical axis
    bool visible = false;
};

Projection project(const CameraRig& rig, std::size_t camera, const Vec3& x_ego);
Projection project(const Camera& camera, const Vec3& x_ego);

struct Ray {
    Vec3 origin;     // ego frame, metres
    Vec3 direction;  // unit
    double t_near = 0, t_far = 0;

    Vec3 at(double t) const { return origin + direction * t; }
};

// Ray through continuous pixel coordinates (u, v).
Ray pixel_ray(const Camera& camera, double u, double v, double t_near, double t_far);

struct Pixel {
    std::size_t row = 0, col = 0;
};

// Rays through pixel centres.
std::vector<Ray> camera_rays(const CameraRig& rig, std::size_t camera, std::span<const Pixel> pixels,
                             double t_near, double t_far);
std::vector<Ray> camera_rays(const CameraRig& rig, std::size_t camera, double t_near, double t_far);

// Camera looking along ego yaw (CCW from +x) with a downward pitch, both in
// degrees. fx = fy from the horizontal field of view, principal point at
// the image centre.
Camera make_camera(std::string name, const Vec3& position, double yaw_deg, double pitch_deg,
                   double hfov_deg, std::size_t height, std::size_t width);

struct RingRigSpec {
    std::vector<double> yaws_deg;
    double pitch_deg = 0;
    double height_m = 1.5;
    double forward_offset_m = 0;
    double hfov_deg = 70;
    std::size_t image_height = 320, image_width = 512;
};

CameraRig make_ring_rig(const RingRigSpec& spec);
// Common layouts: n front-facing cameras spread over +-60 degrees of yaw, or
// n cameras evenly around the vehicle.
CameraRig make_front_rig(std::size_t n, std::size_t height, std::size_t width);
CameraRig make_surround_rig(std::size_t n, std::size_t height, std::size_t width);

// Piecewise-linear cell <-> metre map for one axis. Grid coordinates run over
// [grid_min, grid_min + cells]; cell i is centred at grid_min + i + 0.5.
// Inside [inner_lo, inner_hi] one cell spans inner_res metres, outside it
// spans outer_res metres, and grid coordinate 0 sits at `origin` metres:
//
//   ego(g) = origin + outer_res (g - inner_lo) + inner_res inner_lo   g < inner_lo
//            origin + inner_res g                                     inside
//            origin + outer_res (g - inner_hi) + inner_res inner_hi   g > inner_hi
//
// With origin 0 and inner range [-S_in, S_in] this is the symmetric contraction
// used for the horizontal axes.
struct AxisWarp {
    std::size_t cells = 1;
    double grid_min = 0;
    double inner_lo = 0, inner_hi = 0;
    double inner_res = 1, outer_res = 1;  // metres per cell
    double origin = 0;

    // Symmetric axis centred on the ego origin.
    static AxisWarp symmetric(std::size_t cells, double inner_cells_per_side, double inner_res, double outer_res);
    // One-sided axis: grid 0 is the lowest cell edge at `metric_min`, the
    // first `inner_cells` cells use inner_res and the rest outer_res.
    static AxisWarp bottom_up(std::size_t cells, double inner_cells, double inner_res, double outer_res,
                              double metric_min);

    double grid_max() const { return grid_min + static_cast<double>(cells); }
    double metric_min() const { return to_ego_unchecked(grid_min); }
    double metric_max() const { return to_ego_unchecked(grid_max()); }
    double cell_center(std::size_t i) const { return grid_min + static_cast<double>(i) + 0.5; }

    // Throw Error(kOutOfRange) outside the grid / metric extent.
    double to_ego(double grid) const;
    double to_grid(double ego) const;

    double to_ego_unchecked(double grid) const {
        if (grid < inner_lo) return origin + outer_res * (grid - inner_lo) + inner_res * inner_lo;
        if (grid > inner_hi) return origin + outer_res * (grid - inner_hi) + inner_res * inner_hi;
        return origin + inner_res * grid;
    }
    double to_grid_unchecked(double ego) const {
        const double rel = ego - origin;
        const double lo = inner_res * inner_lo, hi = inner_res * inner_hi;
        if (rel < lo) return inner_lo + (rel - lo) / outer_res;
        if (rel > hi) return inner_hi + (rel - hi) / outer_res;
        return rel / inner_res;
    }

    void validate(const std::string& axis_name) const;
    bool operator==(const AxisWarp&) const = default;
};

struct GridWarp {
    AxisWarp x, y, z;

    const AxisWarp& axis(std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }
    std::array<std::size_t, 3> cells() const { return {x.cells, y.cells, z.cells}; }
    bool contains_metric(const Vec3& p) const;
    void validate() const;
    bool operator==(const GridWarp&) const = default;

    // 96 x 96 x 48 cells covering +-180 m horizontally (36 inner cells per
    // side at 1 m, 12 outer cells at 12 m) and [-3, 45] m vertically (36
    // cells at 0.5 m up to 15 m, then 12 cells at 2.5 m).
    static GridWarp driving_default();
};

}  // namespace tritok
