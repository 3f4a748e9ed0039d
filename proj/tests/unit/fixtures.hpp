#pragma once

#include <algorithm>
#include <vector>

#include "tritok/geometry.hpp"
#include "tritok/nn.hpp"
#include "tritok/triplane.hpp"

namespace fixtures {

using namespace tritok;

// 4 x 4 x 4 cells over [-3, 3] x [-3, 3] x [-1, 2] metres.
inline GridWarp micro_warp() {
    return {AxisWarp::symmetric(4, 1, 1.0, 2.0), AxisWarp::symmetric(4, 1, 1.0, 2.0),
            AxisWarp::bottom_up(4, 2, 0.5, 1.0, -1.0)};
}

inline std::vector<Ray> micro_rays(std::size_t n, Rng& rng) {
    std::uniform_real_distribution<double> u(-0.5, 0.5);
    std::vector<Ray> rays;
    for (std::size_t i = 0; i < n; ++i) {
        Ray r;
        r.origin = {-2.5, u(rng), 0.5 + u(rng)};
        r.direction = normalized(Vec3{1.0, u(rng), 0.5 * u(rng)});
        r.t_near = 0.1;
        r.t_far = 0.0;
        rays.push_back(r);
    }
    return rays;
}

template <typename T>
struct MicroModel {
    ParamStore<T> store;
    Triplane<T> triplane;
    DecoderMLP<T> decoder;

    explicit MicroModel(std::uint64_t seed, std::size_t d = 3, std::size_t hidden = 8) {
        Rng rng = derive_rng(seed, "micro");
        triplane = Triplane<T>::create(store, micro_warp(), d, T(0.3), rng);
        decoder = DecoderMLP<T>::create(store, d, hidden, rng, T(0.5));
    }
};

}  // namespace fixtures

namespace fixtures {

// Two cameras behind the micro volume looking along +x.
inline tritok::CameraRig micro_rig(std::size_t height = 16, std::size_t width = 24) {
    tritok::CameraRig rig;
    rig.cameras.push_back(tritok::make_camera("left", {-2.8, 0.4, 0.5}, 8.0, 5.0, 90.0, height, width));
    rig.cameras.push_back(tritok::make_camera("right", {-2.8, -0.4, 0.6}, -8.0, 5.0, 90.0, height, width));
    rig.front_facing = true;
    return rig;
}

template <typename T>
std::vector<tritok::Tensor<T>> random_images(const tritok::CameraRig& rig, tritok::Rng& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<tritok::Tensor<T>> out;
    for (const auto& cam : rig.cameras) {
        std::vector<T> v(cam.height * cam.width * 3);
        for (auto& x : v) x = static_cast<T>(u(rng));
        out.push_back(tritok::Tensor<T>::from({cam.height, cam.width, 3}, std::move(v)));
    }
    return out;
}

}  // namespace fixtures

namespace fixtures {

template <typename T>
bool bit_equal(const tritok::Tensor<T>& a, const tritok::Tensor<T>& b) {
    return a.shape() == b.shape() && std::equal(a.data().begin(), a.data().end(), b.data().begin());
}

}  // namespace fixtures
