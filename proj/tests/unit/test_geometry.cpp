#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "tritok/error.hpp"
#include "tritok/geometry.hpp"

using namespace tritok;

namespace {

Camera identity_camera() {
    Camera c;
    c.name = "id";
    c.intrinsics = {100, 100, 256, 160};
    c.height = 320;
    c.width = 512;
    return c;
}

Mat3 random_rotation(Rng& rng) {
    std::normal_distribution<double> n;
    const Vec3 a = normalized({n(rng), n(rng), n(rng)});
    Vec3 b{n(rng), n(rng), n(rng)};
    b = normalized(b - a * dot(a, b));
    return Mat3::from_rows(a, b, cross(a, b));
}

double distance_to_ray(const Ray& r, const Vec3& x) {
    const Vec3 d = x - r.origin;
    return norm(d - r.direction * dot(d, r.direction));
}

}  // namespace

TEST_CASE("on-axis projection and visibility") {
    CameraRig rig;
    rig.cameras.push_back(identity_camera());
    const Projection p = project(rig, 0, {0, 0, 1});
    CHECK(p.u == 256);
    CHECK(p.v == 160);
    CHECK(p.depth == 1);
    CHECK(p.visible);
    CHECK_FALSE(project(rig, 0, {0, 0, -1}).visible);
    CHECK_FALSE(project(rig, 0, {10, 0, 1}).visible);
}

TEST_CASE("projection round trip on random rigs") {
    Rng rng(5);
    std::uniform_real_distribution<double> u(-5, 5);
    double worst = 0;
    for (int trial = 0; trial < 50; ++trial) {
        Camera c;
        c.intrinsics = {200 + 20 * u(rng), 200 + 20 * u(rng), 100 + u(rng), 80 + u(rng)};
        c.height = 160;
        c.width = 200;
        c.rotation = random_rotation(rng);
        c.translation = {u(rng), u(rng), u(rng)};
        c.validate();
        for (int i = 0; i < 20; ++i) {
            const Vec3 x{u(rng), u(rng), u(rng)};
            const Projection p = project(c, x);
            if (p.depth <= 0.1) continue;
            worst = std::max(worst, distance_to_ray(pixel_ray(c, p.u, p.v, 0, 100), x));
        }
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("camera rays are unit, centred and pass through projected points") {
    CameraRig rig;
    rig.cameras.push_back(identity_camera());
    const Pixel centre{160, 256};
    const auto rays = camera_rays(rig, 0, std::span<const Pixel>(&centre, 1), 0.2, 50);
    CHECK(std::abs(rays[0].direction.z - 1) < 1e-4);
    for (const Ray& r : camera_rays(rig, 0, 0.2, 50)) CHECK(std::abs(norm(r.direction) - 1) < 1e-12);

    const Camera c = make_camera("c", {1, 2, 1.5}, 30, 10, 70, 64, 96);
    const Vec3 x{8, 5, 0.5};
    const Projection p = project(c, x);
    REQUIRE(p.visible);
    CHECK(distance_to_ray(pixel_ray(c, p.u, p.v, 0, 100), x) < 1e-9);
    const Vec3 axis = c.optical_axis();
    CHECK(std::abs(std::atan2(axis.y, axis.x) - 30 * M_PI / 180) < 1e-12);
    CHECK(std::abs(axis.z + std::sin(10 * M_PI / 180)) < 1e-12);
}

TEST_CASE("rig invariants are validated") {
    Camera c = identity_camera();
    c.rotation.m[0] = 2;
    CHECK_THROWS_AS(c.validate(), Error);
    c = identity_camera();
    c.intrinsics.fx = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = identity_camera();
    c.intrinsics.cx = 600;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("front and surround rigs") {
    CHECK(make_front_rig(4, 64, 96).front_facing);
    CHECK_FALSE(make_surround_rig(6, 64, 96).front_facing);
    CHECK(make_front_rig(7, 64, 96).size() == 7);
}

TEST_CASE("symmetric warp branches and continuity") {
    const AxisWarp w = AxisWarp::symmetric(96, 36, 1.0, 12.0);
    CHECK(w.to_ego(0) == 0);
    CHECK(w.to_ego(36) == 36);
    CHECK(w.to_ego(-36) == -36);
    CHECK(w.to_ego(48) == 180);
    CHECK(w.to_ego(-48) == -180);
    CHECK(w.to_grid(180) == 48);
    CHECK(w.to_grid(-180) == -48);
    for (double g : {-36.0, 36.0}) CHECK(std::abs(w.to_ego(g + 1e-12) - w.to_ego(g - 1e-12)) < 1e-9);
    CHECK_THROWS_AS(w.to_ego(48.5), Error);
    CHECK_THROWS_AS(w.to_grid(181), Error);
}

TEST_CASE("bottom-up z warp reproduces -3, 15 and 45 m") {
    const GridWarp w = GridWarp::driving_default();
    CHECK(w.z.to_ego(0) == -3);
    CHECK(w.z.to_ego(36) == 15);
    CHECK(w.z.to_ego(48) == 45);
    CHECK(w.z.inner_res == 0.5);
    CHECK(w.z.outer_res == 2.5);
    CHECK(w.cells() == std::array<std::size_t, 3>{96, 96, 48});
}

TEST_CASE("warp is strictly increasing and round-trips") {
    const GridWarp w = GridWarp::driving_default();
    Rng rng(9);
    for (std::size_t a = 0; a < 3; ++a) {
        const AxisWarp& ax = w.axis(a);
        double prev = -INFINITY;
        for (int i = 0; i <= 1000; ++i) {
            const double g = ax.grid_min + (ax.grid_max() - ax.grid_min) * i / 1000.0;
            const double e = ax.to_ego(g);
            CHECK(e > prev);
            prev = e;
        }
        std::uniform_real_distribution<double> um(ax.metric_min(), ax.metric_max());
        double worst = 0;
        for (int i = 0; i < 1000; ++i) {
            const double p = um(rng);
            worst = std::max(worst, std::abs(ax.to_ego(ax.to_grid(p)) - p));
        }
        CHECK(worst < 1e-9);
    }
}

TEST_CASE("invalid warps are rejected") {
    AxisWarp w = AxisWarp::symmetric(8, 2, 2.0, 1.0);
    CHECK_THROWS_AS(w.validate("x"), Error);
    w = AxisWarp::symmetric(8, 2, 0.0, 1.0);
    CHECK_THROWS_AS(w.validate("x"), Error);
}
