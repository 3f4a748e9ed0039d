#include "tritok/geometry.hpp"

#include <numbers>

#include "tritok/error.hpp"

namespace tritok {

namespace {

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

std::string fmt(double v) {
    std::string s = std::to_string(v);
    return s;
}

}  // namespace

Vec3 Camera::center() const { return -(rotation.transposed() * translation); }

Vec3 Camera::optical_axis() const { return {rotation(2, 0), rotation(2, 1), rotation(2, 2)}; }

void Camera::validate() const {
    const Mat3 rt = rotation.transposed();
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 3; ++j) {
            double v = 0;
            for (std::size_t k = 0; k < 3; ++k) v += rt(i, k) * rotation(k, j);
            if (std::abs(v - (i == j ? 1.0 : 0.0)) > 1e-9)
                throw config_error("camera '" + name + "': rotation is not orthonormal");
        }
    if (height == 0 || width == 0) throw config_error("camera '" + name + "': empty image size");
    if (!(intrinsics.fx > 0) || !(intrinsics.fy > 0))
        throw config_error("camera '" + name + "': focal lengths must be positive");
    if (intrinsics.cx < 0 || intrinsics.cx >= static_cast<double>(width) || intrinsics.cy < 0 ||
        intrinsics.cy >= static_cast<double>(height))
        throw config_error("camera '" + name + "': principal point outside the image");
}

const Camera& CameraRig::at(std::size_t c) const {
    if (c >= cameras.size())
        throw range_error("camera id " + std::to_string(c) + " not in rig of " + std::to_string(cameras.size()));
    return cameras[c];
}

void CameraRig::validate() const {
    if (cameras.empty()) throw config_error("rig has no cameras");
    for (const auto& c : cameras) c.validate();
}

Projection project(const Camera& camera, const Vec3& x_ego) {
    const Vec3 pc = camera.rotation * x_ego + camera.translation;
    Projection p;
    p.depth = pc.z;
    if (pc.z <= 0) return p;
    const auto& k = camera.intrinsics;
    p.u = k.fx * pc.x / pc.z + k.cx;
    p.v = k.fy * pc.y / pc.z + k.cy;
    p.visible = p.u >= 0 && p.u < static_cast<double>(camera.width) && p.v >= 0 &&
                p.v < static_cast<double>(camera.height);
    return p;
}

Projection project(const CameraRig& rig, std::size_t camera, const Vec3& x_ego) {
    return project(rig.at(camera), x_ego);
}

Ray pixel_ray(const Camera& camera, double u, double v, double t_near, double t_far) {
    const auto& k = camera.intrinsics;
    const Vec3 dir_cam{(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0};
    Ray r;
    r.origin = camera.center();
    r.direction = normalized(camera.rotation.transposed() * dir_cam);
    r.t_near = t_near;
    r.t_far = t_far;
    return r;
}

std::vector<Ray> camera_rays(const CameraRig& rig, std::size_t camera, std::span<const Pixel> pixels,
                             double t_near, double t_far) {
    const Camera& cam = rig.at(camera);
    std::vector<Ray> rays;
    rays.reserve(pixels.size());
    for (const auto& px : pixels) {
        if (px.row >= cam.height || px.col >= cam.width)
            throw range_error("pixel (" + std::to_string(px.row) + ", " + std::to_string(px.col) +
                              ") outside camera '" + cam.name + "'");
        rays.push_back(pixel_ray(cam, static_cast<double>(px.col) + 0.5, static_cast<double>(px.row) + 0.5,
                                 t_near, t_far));
    }
    return rays;
}

std::vector<Ray> camera_rays(const CameraRig& rig, std::size_t camera, double t_near, double t_far) {
    const Camera& cam = rig.at(camera);
    std::vector<Pixel> px;
    px.reserve(cam.height * cam.width);
    for (std::size_t r = 0; r < cam.height; ++r)
        for (std::size_t c = 0; c < cam.width; ++c) px.push_back({r, c});
    return camera_rays(rig, camera, px, t_near, t_far);
}

Camera make_camera(std::string name, const Vec3& position, double yaw_deg, double pitch_deg,
                   double hfov_deg, std::size_t height, std::size_t width) {
    const double yaw = deg2rad(yaw_deg), pitch = deg2rad(pitch_deg);
    const Vec3 forward{std::cos(yaw) * std::cos(pitch), std::sin(yaw) * std::cos(pitch), -std::sin(pitch)};
    const Vec3 right{std::sin(yaw), -std::cos(yaw), 0.0};
    const Vec3 down = cross(forward, right);
    Camera c;
    c.name = std::move(name);
    c.rotation = Mat3::from_rows(right, down, forward);
    c.translation = -(c.rotation * position);
    c.height = height;
    c.width = width;
    const double f = 0.5 * static_cast<double>(width) / std::tan(0.5 * deg2rad(hfov_deg));
    c.intrinsics = {f, f, 0.5 * static_cast<double>(width), 0.5 * static_cast<double>(height)};
    return c;
}

CameraRig make_ring_rig(const RingRigSpec& spec) {
    CameraRig rig;
    for (std::size_t i = 0; i < spec.yaws_deg.size(); ++i) {
        const double yaw = spec.yaws_deg[i];
        const double yr = deg2rad(yaw);
        const Vec3 pos{spec.forward_offset_m * std::cos(yr), spec.forward_offset_m * std::sin(yr), spec.height_m};
        rig.cameras.push_back(make_camera("cam" + std::to_string(i), pos, yaw, spec.pitch_deg, spec.hfov_deg,
                                          spec.image_height, spec.image_width));
    }
    rig.front_facing = !rig.cameras.empty();
    for (const auto& c : rig.cameras)
        if (c.optical_axis().x <= 0) rig.front_facing = false;
    return rig;
}

CameraRig make_front_rig(std::size_t n, std::size_t height, std::size_t width) {
    RingRigSpec spec;
    spec.image_height = height;
    spec.image_width = width;
    for (std::size_t i = 0; i < n; ++i)
        spec.yaws_deg.push_back(n == 1 ? 0.0 : -60.0 + 120.0 * static_cast<double>(i) / static_cast<double>(n - 1));
    return make_ring_rig(spec);
}

CameraRig make_surround_rig(std::size_t n, std::size_t height, std::size_t width) {
    RingRigSpec spec;
    spec.image_height = height;
    spec.image_width = width;
    for (std::size_t i = 0; i < n; ++i) spec.yaws_deg.push_back(360.0 * static_cast<double>(i) / static_cast<double>(n));
    return make_ring_rig(spec);
}

AxisWarp AxisWarp::symmetric(std::size_t cells, double inner_cells_per_side, double inner_res, double outer_res) {
    AxisWarp w;
    w.cells = cells;
    w.grid_min = -0.5 * static_cast<double>(cells);
    w.inner_lo = -inner_cells_per_side;
    w.inner_hi = inner_cells_per_side;
    w.inner_res = inner_res;
    w.outer_res = outer_res;
    w.origin = 0.0;
    return w;
}

AxisWarp AxisWarp::bottom_up(std::size_t cells, double inner_cells, double inner_res, double outer_res,
                             double metric_min) {
    AxisWarp w;
    w.cells = cells;
    w.grid_min = 0.0;
    w.inner_lo = 0.0;
    w.inner_hi = inner_cells;
    w.inner_res = inner_res;
    w.outer_res = outer_res;
    w.origin = metric_min;
    return w;
}

double AxisWarp::to_ego(double grid) const {
    if (!(grid >= grid_min && grid <= grid_max()))
        throw range_error("grid coordinate " + fmt(grid) + " outside [" + fmt(grid_min) + ", " + fmt(grid_max()) + "]");
    return to_ego_unchecked(grid);
}

double AxisWarp::to_grid(double ego) const {
    if (!(ego >= metric_min() && ego <= metric_max()))
        throw range_error("metric coordinate " + fmt(ego) + " m outside [" + fmt(metric_min()) + ", " +
                          fmt(metric_max()) + "] m");
    return to_grid_unchecked(ego);
}

void AxisWarp::validate(const std::string& axis_name) const {
    const std::string where = "warp axis " + axis_name + ": ";
    if (cells == 0) throw config_error(where + "cell count must be positive");
    if (!(inner_res > 0)) throw config_error(where + "inner resolution must be positive");
    if (!(outer_res >= inner_res)) throw config_error(where + "outer resolution must be >= inner resolution");
    if (!(inner_lo <= inner_hi) || inner_lo < grid_min || inner_hi > grid_max())
        throw config_error(where + "inner range [" + fmt(inner_lo) + ", " + fmt(inner_hi) +
                           "] not inside the grid range");
    if (!(grid_min <= 0.0 && 0.0 <= grid_max())) throw config_error(where + "grid range must contain 0");
}

bool GridWarp::contains_metric(const Vec3& p) const {
    return p.x >= x.metric_min() && p.x <= x.metric_max() && p.y >= y.metric_min() && p.y <= y.metric_max() &&
           p.z >= z.metric_min() && p.z <= z.metric_max();
}

void GridWarp::validate() const {
    x.validate("x");
    y.validate("y");
    z.validate("z");
}

GridWarp GridWarp::driving_default() {
    return {AxisWarp::symmetric(96, 36, 1.0, 12.0), AxisWarp::symmetric(96, 36, 1.0, 12.0),
            AxisWarp::bottom_up(48, 36, 0.5, 2.5, -3.0)};
}

}  // namespace tritok
