#include "tritok/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "tritok/error.hpp"
#include "tritok/nn.hpp"
#include "tritok/parallel.hpp"

namespace tritok {

namespace {

constexpr double kEps = 1e-9;

bool inside_extent(const GridWarp& w, const Vec3& p) {
    for (std::size_t a = 0; a < 3; ++a)
        if (p[a] < w.axis(a).metric_min() || p[a] > w.axis(a).metric_max()) return false;
    return true;
}

std::optional<std::pair<double, Vec3>> hit_box(const Box& b, const Ray& r) {
    double t0 = -std::numeric_limits<double>::infinity(), t1 = std::numeric_limits<double>::infinity();
    std::size_t axis = 0;
    double sign = -1;
    for (std::size_t a = 0; a < 3; ++a) {
        const double o = r.origin[a], d = r.direction[a];
        if (std::abs(d) < 1e-15) {
            if (o < b.lo[a] || o > b.hi[a]) return std::nullopt;
            continue;
        }
        double ta = (b.lo[a] - o) / d, tb = (b.hi[a] - o) / d;
        double s = -1;
        if (ta > tb) {
            std::swap(ta, tb);
            s = 1;
        }
        if (ta > t0) {
            t0 = ta;
            axis = a;
            sign = s;
        }
        t1 = std::min(t1, tb);
    }
    if (t0 > t1 || t0 <= kEps) return std::nullopt;
    Vec3 n;
    n[axis] = sign;
    return std::make_pair(t0, n);
}

std::optional<std::pair<double, Vec3>> hit_sphere(const Sphere& s, const Ray& r) {
    const Vec3 oc = r.origin - s.center;
    const double b = dot(oc, r.direction);
    const double c = dot(oc, oc) - s.radius * s.radius;
    const double disc = b * b - c;
    if (disc < 0) return std::nullopt;
    const double sq = std::sqrt(disc);
    double t = -b - sq;
    if (t <= kEps) t = -b + sq;
    if (t <= kEps) return std::nullopt;
    return std::make_pair(t, normalized(r.at(t) - s.center));
}

}  // namespace

void SyntheticScene::validate(const GridWarp& warp) const {
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        const Box& b = boxes[i];
        if (!(b.lo.x < b.hi.x && b.lo.y < b.hi.y && b.lo.z < b.hi.z))
            throw config_error("scene: box " + std::to_string(i) + " has empty extent");
        if (!inside_extent(warp, b.lo) || !inside_extent(warp, b.hi))
            throw config_error("scene: box " + std::to_string(i) + " leaves the triplane extent");
    }
    for (std::size_t i = 0; i < spheres.size(); ++i) {
        const Sphere& s = spheres[i];
        const Vec3 r{s.radius, s.radius, s.radius};
        if (!(s.radius > 0)) throw config_error("scene: sphere " + std::to_string(i) + " needs a positive radius");
        if (!inside_extent(warp, s.center - r) || !inside_extent(warp, s.center + r))
            throw config_error("scene: sphere " + std::to_string(i) + " leaves the triplane extent");
    }
    if (ground.enabled) {
        const double h = ground.half_extent;
        if (!inside_extent(warp, {-h, -h, ground.height}) || !inside_extent(warp, {h, h, ground.height}))
            throw config_error("scene: ground square leaves the triplane extent");
    }
    if (norm(light) < 1e-12) throw config_error("scene: light direction is zero");
}

SyntheticScene generate_scene(const SceneGenConfig& cfg) {
    Rng rng = derive_rng(cfg.seed, "scene");
    std::uniform_real_distribution<double> ux(cfg.x_min, cfg.x_max), uy(cfg.y_min, cfg.y_max);
    std::uniform_real_distribution<double> us(cfg.size_min, cfg.size_max), uc(0.15, 0.95);
    SyntheticScene s;
    s.ground.enabled = cfg.ground;
    s.ground.half_extent = cfg.ground_half_extent;
    for (std::size_t i = 0; i < cfg.boxes; ++i) {
        const double cx = ux(rng), cy = uy(rng), sx = us(rng), sy = us(rng), sz = us(rng);
        Box b;
        b.lo = {cx - sx / 2, cy - sy / 2, 0.0};
        b.hi = {cx + sx / 2, cy + sy / 2, sz};
        b.albedo = {uc(rng), uc(rng), uc(rng)};
        s.boxes.push_back(b);
    }
    for (std::size_t i = 0; i < cfg.spheres; ++i) {
        Sphere sp;
        sp.radius = us(rng) / 2;
        sp.center = {ux(rng), uy(rng), sp.radius};
        sp.albedo = {uc(rng), uc(rng), uc(rng)};
        s.spheres.push_back(sp);
    }
    return s;
}

std::optional<Hit> intersect(const SyntheticScene& scene, const Ray& ray) {
    std::optional<Hit> best;
    auto consider = [&](double t, const Vec3& n, const Rgb& albedo, std::size_t id) {
        if (!best || t < best->t) best = Hit{t, n, albedo, id};
    };
    for (std::size_t i = 0; i < scene.boxes.size(); ++i)
        if (auto h = hit_box(scene.boxes[i], ray)) consider(h->first, h->second, scene.boxes[i].albedo, i);
    const std::size_t nb = scene.boxes.size();
    for (std::size_t i = 0; i < scene.spheres.size(); ++i)
        if (auto h = hit_sphere(scene.spheres[i], ray)) consider(h->first, h->second, scene.spheres[i].albedo, nb + i);
    const Ground& g = scene.ground;
    if (g.enabled && std::abs(ray.direction.z) > 1e-15) {
        const double t = (g.height - ray.origin.z) / ray.direction.z;
        const Vec3 p = ray.at(t);
        if (t > kEps && std::abs(p.x) <= g.half_extent && std::abs(p.y) <= g.half_extent) {
            const auto ix = static_cast<long>(std::floor(p.x / g.tile)), iy = static_cast<long>(std::floor(p.y / g.tile));
            const Vec3 n{0, 0, ray.origin.z >= g.height ? 1.0 : -1.0};
            consider(t, n, ((ix + iy) % 2 == 0) ? g.albedo_a : g.albedo_b, nb + scene.spheres.size());
        }
    }
    return best;
}

Rgb shade(const SyntheticScene& scene, const Ray& ray) {
    const auto h = intersect(scene, ray);
    if (!h) return scene.background;
    const double lambert = std::max(0.0, dot(h->normal, normalized(scene.light)));
    const double k = scene.ambient + (1 - scene.ambient) * lambert;
    return {h->albedo[0] * k, h->albedo[1] * k, h->albedo[2] * k};
}

GroundTruthView render_ground_truth(const SyntheticScene& scene, const CameraRig& rig, std::size_t camera) {
    const Camera& cam = rig.at(camera);
    GroundTruthView v{Image(cam.height, cam.width, 3), Image(cam.height, cam.width, 1),
                      std::vector<std::uint8_t>(cam.height * cam.width, 0)};
    const std::vector<Ray> rays = camera_rays(rig, camera, 0.0, 1.0);
    parallel_for(rays.size(), [&](std::size_t, std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            const Rgb c = shade(scene, rays[i]);
            for (std::size_t k = 0; k < 3; ++k) v.rgb.data[3 * i + k] = static_cast<float>(c[k]);
            if (const auto h = intersect(scene, rays[i])) {
                v.depth.data[i] = static_cast<float>(h->t);
                v.hit[i] = 1;
            }
        }
    });
    return v;
}

}  // namespace tritok
