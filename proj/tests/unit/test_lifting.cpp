#include <cmath>
#include <set>

#include "doctest.h"
#include "fixtures.hpp"
#include "tritok/error.hpp"
#include "tritok/lifting.hpp"
#include "tritok/renderer.hpp"

using namespace tritok;

TEST_CASE("zero image gives a spatially constant feature map") {
    ParamStore<double> store;
    Rng rng(1);
    auto enc = ConvEncoder<double>::create(store, 3, {8, 8, 8}, 6, rng);
    for (auto& [name, t] : store.entries())
        if (name.ends_with(".bias"))
            for (auto& v : t.mutable_data()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    const auto f = enc(Tensor<double>::zeros({64, 32, 3}));
    CHECK(f.shape() == Shape{4, 2, 6});
    for (std::size_t i = 1; i < 8; ++i)
        for (std::size_t c = 0; c < 6; ++c) CHECK(f.data()[i * 6 + c] == f.data()[c]);
}

TEST_CASE("encoder output shape and stride errors") {
    ParamStore<float> store;
    Rng rng(1);
    auto enc = ConvEncoder<float>::create(store, 3, {4, 4, 4}, 6, rng);
    CHECK(enc.stride() == 16);
    CHECK(enc(Tensor<float>::zeros({320, 512, 3})).shape() == Shape{20, 32, 6});
    CHECK(enc(Tensor<float>::zeros({576, 1024, 3})).shape() == Shape{36, 64, 6});
    try {
        enc(Tensor<float>::zeros({100, 512, 3}));
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::kConfig);
        CHECK(std::string(e.what()).find("stride 16") != std::string::npos);
    }
}

TEST_CASE("conv2d against a naive loop and finite differences") {
    Rng rng(3);
    auto x = normal_init<double>({5, 6, 2}, 0.0, 1.0, rng);
    auto w = normal_init<double>({4, 4, 2, 3}, 0.0, 1.0, rng);
    auto b = normal_init<double>({3}, 0.0, 1.0, rng);
    const auto y = conv2d(x, w, b, 2, 1);
    REQUIRE(y.shape() == Shape{2, 3, 3});
    auto at = [&](long r, long c, std::size_t i) {
        r = std::clamp(r, 0L, 4L);
        c = std::clamp(c, 0L, 5L);
        return x.data()[(static_cast<std::size_t>(r) * 6 + static_cast<std::size_t>(c)) * 2 + i];
    };
    for (std::size_t r = 0; r < 2; ++r)
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t o = 0; o < 3; ++o) {
                double acc = b.data()[o];
                for (std::size_t ky = 0; ky < 4; ++ky)
                    for (std::size_t kx = 0; kx < 4; ++kx)
                        for (std::size_t i = 0; i < 2; ++i)
                            acc += at(static_cast<long>(2 * r + ky) - 1, static_cast<long>(2 * c + kx) - 1, i) *
                                   w.data()[((ky * 4 + kx) * 2 + i) * 3 + o];
                CHECK(y.data()[(r * 3 + c) * 3 + o] == doctest::Approx(acc).epsilon(1e-12));
            }
    x.set_requires_grad(true);
    w.set_requires_grad(true);
    b.set_requires_grad(true);
    const auto res = grad_check<double>([&] { auto z = conv2d(x, w, b, 2, 1); return sum(mul(z, z)); }, {x, w, b});
    CHECK(res.max_rel_error <= 1e-6);
}

TEST_CASE("positional encoding") {
    std::vector<double> v(12);
    sinusoidal_encode({0, 0, 0}, 12, v.data());
    for (std::size_t i = 0; i < 12; ++i) CHECK(v[i] == (i % 2 == 0 ? 0.0 : 1.0));
    CHECK_THROWS_AS(sinusoidal_encode({0, 0, 0}, 8, v.data()), Error);

    const GridWarp w{AxisWarp::symmetric(16, 4, 1.0, 2.0), AxisWarp::symmetric(16, 4, 1.0, 2.0),
                     AxisWarp::bottom_up(8, 4, 0.5, 1.0, -1.0)};
    const auto pe = sinusoidal_pe<double>(w, 12);
    std::set<std::vector<double>> seen;
    for (std::size_t q = 0; q < 16 * 16 * 8; ++q) {
        std::vector<double> row(pe.data().begin() + static_cast<long>(q * 12), pe.data().begin() + static_cast<long>((q + 1) * 12));
        for (double x : row) CHECK((x >= -1.0 && x <= 1.0));
        seen.insert(row);
    }
    CHECK(seen.size() == 16 * 16 * 8);
}

TEST_CASE("degenerate attention adds the reference sample") {
    ParamStore<double> store;
    Rng rng(5);
    auto attn = DeformableAttention<double>::create(store, "a", 6, 1, rng);
    auto w = attn.out.weight.mutable_data();
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < 6; ++i) w[i * 6 + i] = 1.0;
    auto features = normal_init<double>({3, 4, 6}, 0.0, 1.0, rng);
    CameraQueries cam{{0.5, 1.25, 2.0, 3.0, 1.0, 0.0}, {1, 1, 0}};
    auto q = normal_init<double>({3, 6}, 0.0, 1.0, rng);
    const auto out = deformable_attend_per_image(attn, q, features, cam);
    const auto& f = features.data();
    auto bil = [&](double a, double b, std::size_t c) {
        const auto i0 = static_cast<std::size_t>(a), j0 = static_cast<std::size_t>(b);
        const std::size_t i1 = std::min<std::size_t>(i0 + 1, 2), j1 = std::min<std::size_t>(j0 + 1, 3);
        const double fa = a - static_cast<double>(i0), fb = b - static_cast<double>(j0);
        return (1 - fa) * (1 - fb) * f[(i0 * 4 + j0) * 6 + c] + (1 - fa) * fb * f[(i0 * 4 + j1) * 6 + c] +
               fa * (1 - fb) * f[(i1 * 4 + j0) * 6 + c] + fa * fb * f[(i1 * 4 + j1) * 6 + c];
    };
    for (std::size_t c = 0; c < 6; ++c) {
        CHECK(out.data()[c] == doctest::Approx(q.data()[c] + bil(0.5, 1.25, c)).epsilon(1e-12));
        CHECK(out.data()[6 + c] == doctest::Approx(q.data()[6 + c] + bil(2.0, 3.0, c)).epsilon(1e-12));
        CHECK(out.data()[12 + c] == q.data()[12 + c]);
    }
}

TEST_CASE("sample_feature_map gradients in features and offsets") {
    Rng rng(8);
    auto f = normal_init<double>({4, 5, 3}, 0.0, 1.0, rng);
    auto off = normal_init<double>({3, 2, 2}, 0.0, 0.4, rng);
    f.set_requires_grad(true);
    off.set_requires_grad(true);
    const std::vector<double> ref{1.3, 2.2, 0.7, 3.6, 2.1, 0.4};
    const auto res = grad_check<double>(
        [&] { auto s = sample_feature_map(f, ref, off); return sum(mul(s, s)); }, {f, off});
    CHECK(res.max_rel_error <= 1e-6);
}

TEST_CASE("camera fusion") {
    Rng rng(2);
    auto q = normal_init<double>({4, 6}, 0.0, 1.0, rng);
    auto u0 = normal_init<double>({4, 6}, 0.0, 1.0, rng);
    auto u1 = normal_init<double>({4, 6}, 0.0, 1.0, rng);
    auto s0 = normal_init<double>({4}, 0.0, 1.0, rng);
    auto s1 = normal_init<double>({4}, 0.0, 1.0, rng);
    CameraQueries c0{std::vector<double>(8, 0.0), {1, 1, 0, 0}}, c1{std::vector<double>(8, 0.0), {1, 0, 1, 0}};

    SUBCASE("single visible camera passes its update") {
        const auto out = fuse_cameras(q, {u0}, {s0}, {&c0});
        for (std::size_t c = 0; c < 6; ++c) {
            CHECK(out.data()[c] == q.data()[c] + u0.data()[c]);
            CHECK(out.data()[18 + c] == q.data()[18 + c]);
        }
    }
    SUBCASE("identical branches equal either branch") {
        const auto two = fuse_cameras(q, {u0, u0}, {s0, s0}, {&c0, &c0});
        const auto one = fuse_cameras(q, {u0}, {s0}, {&c0});
        for (std::size_t i = 0; i < 24; ++i) CHECK(two.data()[i] == doctest::Approx(one.data()[i]).epsilon(1e-15));
    }
    SUBCASE("order of cameras does not change a bit") {
        const auto a = fuse_cameras(q, {u0, u1}, {s0, s1}, {&c0, &c1});
        const auto b = fuse_cameras(q, {u1, u0}, {s1, s0}, {&c1, &c0});
        CHECK(fixtures::bit_equal(a, b));
    }
    SUBCASE("gradient") {
        for (auto* t : {&q, &u0, &u1, &s0, &s1}) t->set_requires_grad(true);
        const auto res = grad_check<double>(
            [&] { auto o = fuse_cameras(q, {u0, u1}, {s0, s1}, {&c0, &c1}); return sum(mul(o, o)); },
            {q, u0, u1, s0, s1});
        CHECK(res.max_rel_error <= 1e-6);
    }
}

TEST_CASE("collapse matches a loop oracle") {
    const GridWarp w = fixtures::micro_warp();
    Rng rng(12);
    const auto vol = normal_init<double>({4, 4, 4, 3}, 0.0, 1.0, rng);
    const auto tp = collapse_to_triplane(vol, w);
    const auto& v = vol.data();
    auto at = [&](std::size_t i, std::size_t j, std::size_t k, std::size_t c) { return v[((i * 4 + j) * 4 + k) * 3 + c]; };
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = 0; b < 4; ++b)
            for (std::size_t c = 0; c < 3; ++c) {
                double sxy = 0, sxz = 0, syz = 0;
                for (std::size_t r = 0; r < 4; ++r) {
                    sxy += at(a, b, r, c);
                    sxz += at(a, r, b, c);
                    syz += at(r, a, b, c);
                }
                CHECK(tp.xy.data()[(a * 4 + b) * 3 + c] == sxy / 4.0);
                CHECK(tp.xz.data()[(a * 4 + b) * 3 + c] == sxz / 4.0);
                CHECK(tp.yz.data()[(a * 4 + b) * 3 + c] == syz / 4.0);
            }
    const auto constant = collapse_to_triplane(Tensor<double>::full({4, 4, 4, 3}, 0.7), w);
    for (double x : constant.xy.data()) CHECK(x == doctest::Approx(0.7).epsilon(1e-15));
}

TEST_CASE("lift output shape, determinism and camera-count checks") {
    const GridWarp w = fixtures::micro_warp();
    LiftConfig cfg;
    cfg.feature_dim = 6;
    cfg.encoder_widths = {4, 4};
    ParamStore<double> store;
    Rng rng(4);
    const auto lifter = Lifter<double>::create(store, w, cfg, rng);
    const CameraRig rig = fixtures::micro_rig();
    const auto images = fixtures::random_images<double>(rig, rng);
    const auto a = lifter(images, rig);
    const auto b = lifter(images, rig);
    CHECK(a.xy.shape() == Shape{4, 4, 6});
    CHECK(a.xz.shape() == Shape{4, 4, 6});
    CHECK(a.yz.shape() == Shape{4, 4, 6});
    CHECK(fixtures::bit_equal(a.xy, b.xy));
    CHECK_THROWS_AS(lifter({images[0]}, rig), Error);
}

TEST_CASE("lift to render loss gradient") {
    const GridWarp w = fixtures::micro_warp();
    LiftConfig cfg;
    cfg.feature_dim = 6;
    cfg.encoder_widths = {4, 4};
    ParamStore<double> store;
    Rng rng(21);
    const auto lifter = Lifter<double>::create(store, w, cfg, rng);
    const auto dec = DecoderMLP<double>::create(store, 6, 8, rng, 0.5);
    const CameraRig rig = fixtures::micro_rig();
    const auto images = fixtures::random_images<double>(rig, rng);
    const auto rays = fixtures::micro_rays(8, rng);
    RenderConfig rc;
    rc.samples = 8;
    std::vector<double> tv(24);
    for (std::size_t i = 0; i < 24; ++i) tv[i] = 0.05 + 0.9 * static_cast<double>((i * 7) % 24) / 24.0;
    const auto target = Tensor<double>::from({8, 3}, tv);
    LossConfig lc;
    lc.lambda_perceptual = 0;
    auto f = [&] {
        const auto tp = lifter(images, rig);
        const auto o = render_rays(tp, dec, std::span<const Ray>(rays), rc);
        return reconstruction_loss(target, o.rgb, lc);
    };
    for (std::size_t c = 0; c < rig.size(); ++c) CHECK(project_queries(w, rig.at(c), 8).visible_count() >= 8);
    const auto res = grad_check<double>(f, store.tensors());
    CHECK(res.max_rel_error <= 1e-4);
    store.zero_grad();
    f().backward();
    double enc_norm = 0;
    for (const auto& [name, t] : store.entries())
        if (name.starts_with("encoder."))
            for (double g : t.grad()) enc_norm += g * g;
    CHECK(enc_norm > 0);
}
